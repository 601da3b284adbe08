use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::Feature;
use crate::error::{Error, Result};
use crate::model::{ClusterCenter, ClusterId};

/// One row of the center table: a (merged) center plus its feature statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterRow {
    #[serde(flatten)]
    pub center: ClusterCenter,
    pub members: Vec<ClusterId>,
    pub p_std: Option<f64>,
    pub f_std: Option<f64>,
    pub bbox_min: [f64; 4],
    pub bbox_max: [f64; 4],
}

/// Joins centers with the features of the same id. Centers without a
/// feature are skipped.
pub fn center_table(centers: &[ClusterCenter], features: &[Feature]) -> Vec<CenterRow> {
    let mut rows: Vec<CenterRow> = features
        .iter()
        .filter_map(|f| {
            let center = centers.iter().find(|c| c.id == f.id)?;
            Some(CenterRow {
                center: *center,
                members: f.members.clone(),
                p_std: f.stats.point.map(|s| s.std),
                f_std: f.stats.field.map(|s| s.std),
                bbox_min: f.stats.bbox_min,
                bbox_max: f.stats.bbox_max,
            })
        })
        .collect();
    rows.sort_by_key(|r| r.center.id);
    rows
}

/// Queryable center-table columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Property {
    X,
    Y,
    Z,
    T,
    PointValue,
    FieldValue,
    NPoints,
    NFields,
    PointStd,
    FieldStd,
    /// Bounding-box side length along an axis (3 is time).
    Extent(usize),
}

const NAMES: [(&str, Property); 14] = [
    ("x_c", Property::X),
    ("y_c", Property::Y),
    ("z_c", Property::Z),
    ("t_c", Property::T),
    ("p_c", Property::PointValue),
    ("f_c", Property::FieldValue),
    ("n_points", Property::NPoints),
    ("n_fields", Property::NFields),
    ("p_std", Property::PointStd),
    ("f_std", Property::FieldStd),
    ("extent_x", Property::Extent(0)),
    ("extent_y", Property::Extent(1)),
    ("extent_z", Property::Extent(2)),
    ("extent_t", Property::Extent(3)),
];

impl Property {
    pub fn names() -> impl Iterator<Item = &'static str> {
        NAMES.iter().map(|(n, _)| *n)
    }

    pub fn name(self) -> &'static str {
        NAMES.iter().find(|(_, p)| *p == self).map(|(n, _)| *n).expect("every property is named")
    }

    /// Value of this column in `row`; `None` for an absent average.
    pub fn value(self, row: &CenterRow) -> Option<f64> {
        let c = &row.center;
        match self {
            Property::X => Some(c.x),
            Property::Y => Some(c.y),
            Property::Z => Some(c.z),
            Property::T => Some(c.t),
            Property::PointValue => c.point_value,
            Property::FieldValue => c.field_value,
            Property::NPoints => Some(c.n_points as f64),
            Property::NFields => Some(c.n_fields as f64),
            Property::PointStd => row.p_std,
            Property::FieldStd => row.f_std,
            Property::Extent(a) => Some(row.bbox_max[a] - row.bbox_min[a]),
        }
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NAMES.iter().find(|(n, _)| *n == s).map(|(_, p)| *p).ok_or_else(|| {
            Error::Query(format!(
                "unknown property `{s}` (expected one of {})",
                Property::names().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

/// Inclusive range test on one property.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Predicate {
    pub property: Property,
    pub min: f64,
    pub max: f64,
}

impl Predicate {
    pub fn new(property: Property, min: f64, max: f64) -> Result<Self> {
        if min.is_nan() || max.is_nan() || min > max {
            return Err(Error::Query(format!("{}: empty range {min}:{max}", property.name())));
        }
        Ok(Self { property, min, max })
    }

    /// Rows with an absent value never match.
    pub fn matches(&self, row: &CenterRow) -> bool {
        self.property.value(row).is_some_and(|v| v >= self.min && v <= self.max)
    }
}

fn bound(s: &str, text: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Query(format!("`{text}`: `{s}` is not a number")))
}

impl FromStr for Predicate {
    type Err = Error;

    /// Parses `<property>=<min>:<max>`.
    fn from_str(text: &str) -> Result<Self> {
        let (name, range) = text
            .split_once('=')
            .ok_or_else(|| Error::Query(format!("`{text}`: expected <property>=<min>:<max>")))?;
        let (lo, hi) = range
            .split_once(':')
            .ok_or_else(|| Error::Query(format!("`{text}`: range must be <min>:<max>")))?;
        Predicate::new(name.trim().parse()?, bound(lo, text)?, bound(hi, text)?)
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}:{}", self.property.name(), self.min, self.max)
    }
}

/// Conjunction of predicates; empty matches everything.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CenterQuery {
    pub predicates: Vec<Predicate>,
}

impl CenterQuery {
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<Self> {
        let predicates = items.iter().map(|s| s.as_ref().parse()).collect::<Result<_>>()?;
        Ok(Self { predicates })
    }

    pub fn matches(&self, row: &CenterRow) -> bool {
        self.predicates.iter().all(|p| p.matches(row))
    }
}

/// Ids of matching rows, ascending.
pub fn query_centers(rows: &[CenterRow], query: &CenterQuery) -> Vec<ClusterId> {
    let mut ids: Vec<ClusterId> = rows.iter().filter(|r| query.matches(r)).map(|r| r.center.id).collect();
    ids.sort_unstable();
    ids
}
