//! Derived point variables.
//!
//! A tiny arithmetic language over the raw columns of a point file plus a few
//! trajectory quantities:
//!
//! * `path_length` - summed length of the trajectory polyline
//! * `displacement` - straight-line distance from first to last sample
//! * `speed` - per-sample speed from consecutive positions
//! * `x`, `y`, `z`, `t` - the sample's own coordinates
//!
//! Operators are `+ - * /`, unary minus and parentheses; functions are `abs`,
//! `sqrt`, `min` and `max`.

use crate::error::{Error, Result};

/// Values an expression can read for one sample.
pub struct SampleScope<'a> {
    pub columns: &'a [f64],
    pub position: [f64; 4],
    pub path_length: f64,
    pub displacement: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Var {
    Column(usize),
    Coord(usize),
    PathLength,
    Displacement,
    Speed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn arity(self) -> usize {
        match self {
            Func::Abs | Func::Sqrt => 1,
            Func::Min | Func::Max => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A compiled expression bound to a particular column layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Expression {
    source: String,
    root: Node,
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    columns: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(Error::Expression(format!("expected `{op}`")))
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op(c)) if *c == '+' || *c == '-' => *c,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op(c)) if *c == '*' || *c == '/' => *c,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.eat('+');
        self.atom()
    }

    fn atom(&mut self) -> Result<Node> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let func = match name.as_str() {
                        "abs" => Func::Abs,
                        "sqrt" => Func::Sqrt,
                        "min" => Func::Min,
                        "max" => Func::Max,
                        _ => return Err(Error::Expression(format!("unknown function `{name}`"))),
                    };
                    let mut args = vec![self.sum()?];
                    while self.eat(',') {
                        args.push(self.sum()?);
                    }
                    self.expect(')')?;
                    if args.len() != func.arity() {
                        return Err(Error::Expression(format!(
                            "`{name}` takes {} argument(s)",
                            func.arity()
                        )));
                    }
                    Ok(Node::Call(func, args))
                } else {
                    self.variable(&name).map(Node::Var)
                }
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(tok) => Err(Error::Expression(format!("unexpected token {tok:?}"))),
            None => Err(Error::Expression("unexpected end of expression".into())),
        }
    }

    fn variable(&self, name: &str) -> Result<Var> {
        // raw columns shadow the built-in names
        if let Some(i) = self.columns.iter().position(|c| c == name) {
            return Ok(Var::Column(i));
        }
        Ok(match name {
            "path_length" => Var::PathLength,
            "displacement" => Var::Displacement,
            "speed" => Var::Speed,
            "x" => Var::Coord(0),
            "y" => Var::Coord(1),
            "z" => Var::Coord(2),
            "t" => Var::Coord(3),
            _ => return Err(Error::Expression(format!("unknown variable `{name}`"))),
        })
    }
}

impl Expression {
    /// Parses `source` against the given raw column names.
    pub fn compile(source: &str, columns: &[String]) -> Result<Self> {
        let mut parser = Parser {
            tokens: tokenize(source)?,
            pos: 0,
            columns,
        };
        if parser.tokens.is_empty() {
            return Err(Error::Expression("empty expression".into()));
        }
        let root = parser.sum()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expression(format!(
                "trailing input after position {}",
                parser.pos
            )));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when evaluation needs per-trajectory aggregates.
    pub fn uses_trajectory(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Var(Var::PathLength | Var::Displacement | Var::Speed) => true,
                Node::Num(_) | Node::Var(_) => false,
                Node::Neg(a) => walk(a),
                Node::Bin(_, a, b) => walk(a) || walk(b),
                Node::Call(_, args) => args.iter().any(walk),
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, scope: &SampleScope<'_>) -> f64 {
        fn go(n: &Node, s: &SampleScope<'_>) -> f64 {
            match n {
                Node::Num(v) => *v,
                Node::Var(Var::Column(i)) => s.columns[*i],
                Node::Var(Var::Coord(i)) => s.position[*i],
                Node::Var(Var::PathLength) => s.path_length,
                Node::Var(Var::Displacement) => s.displacement,
                Node::Var(Var::Speed) => s.speed,
                Node::Neg(a) => -go(a, s),
                Node::Bin(op, a, b) => {
                    let (a, b) = (go(a, s), go(b, s));
                    match op {
                        '+' => a + b,
                        '-' => a - b,
                        '*' => a * b,
                        _ => a / b,
                    }
                }
                Node::Call(f, args) => match f {
                    Func::Abs => go(&args[0], s).abs(),
                    Func::Sqrt => go(&args[0], s).sqrt(),
                    Func::Min => go(&args[0], s).min(go(&args[1], s)),
                    Func::Max => go(&args[0], s).max(go(&args[1], s)),
                },
            }
        }
        go(&self.root, scope)
    }
}
