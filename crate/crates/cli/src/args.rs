use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfseg::engine::ExecutionConfig;
use mfseg::ingest::DatasetSource;
use mfseg::model::ClusterParams;

#[derive(Parser, Debug)]
#[command(name = "mfseg", version, about = "Joint segmentation of trajectory and field data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with ground-truth labels.
    Gen(GenArgs),
    /// Cluster a dataset and write the segmentation artifacts.
    Segment(SegmentArgs),
    /// Merge saved clusters into features at a threshold.
    Merge(MergeArgs),
    /// Write the feature export for saved artifacts.
    Features(OutArgs),
    /// Print ids of centers matching every `property=min:max` predicate.
    Query(QueryArgs),
    /// Time single iterations across sample and cluster counts.
    Bench(BenchArgs),
    /// Serve a dataset and its artifacts over HTTP.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

pub fn parse_k(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(format!("expected four comma-separated counts, got `{s}`"));
    }
    let mut k = [0; 4];
    for (slot, p) in k.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a count"))?;
    }
    Ok(k)
}

#[derive(Args, Debug, Clone, Default)]
pub struct InputArgs {
    /// Field metadata file.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Point/trajectory file.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Expression over the point file's columns giving each point's value.
    #[arg(long)]
    pub derive: Option<String>,
}

impl InputArgs {
    pub fn source(&self) -> DatasetSource {
        DatasetSource {
            field: self.field.clone(),
            points: self.points.clone(),
            derive: self.derive.clone(),
        }
    }
}

/// Clustering parameters; anything left out keeps its default.
#[derive(Args, Debug, Clone, Default)]
pub struct ParamArgs {
    /// Seed counts along x,y,z,t.
    #[arg(long, value_parser = parse_k, value_name = "KX,KY,KZ,KT")]
    pub k: Option<[usize; 4]>,
    /// Length units per time unit.
    #[arg(long)]
    pub cf: Option<f64>,
    /// Space-time distance weight.
    #[arg(long)]
    pub wd: Option<f64>,
    /// Point value weight.
    #[arg(long)]
    pub wp: Option<f64>,
    /// Field value weight.
    #[arg(long)]
    pub wf: Option<f64>,
    /// Convergence threshold on the relative change of center values.
    #[arg(long = "eps-c")]
    pub eps_c: Option<f64>,
    /// Merge threshold recorded with the run.
    #[arg(long = "eps-m")]
    pub eps_m: Option<f64>,
    #[arg(long = "max-iters")]
    pub max_iters: Option<usize>,
    /// Rescale point and field values to [0, 1] before clustering.
    #[arg(long, value_enum)]
    pub normalize: Option<Switch>,
}

impl ParamArgs {
    pub fn params(&self) -> ClusterParams {
        let d = ClusterParams::default();
        ClusterParams {
            k: self.k.unwrap_or(d.k),
            time_scale: self.cf.unwrap_or(d.time_scale),
            weight_distance: self.wd.unwrap_or(d.weight_distance),
            weight_point: self.wp.unwrap_or(d.weight_point),
            weight_field: self.wf.unwrap_or(d.weight_field),
            convergence_eps: self.eps_c.unwrap_or(d.convergence_eps),
            merge_eps: self.eps_m.unwrap_or(d.merge_eps),
            max_iterations: self.max_iters.unwrap_or(d.max_iterations),
            normalize: self.normalize.map_or(d.normalize, |s| s == Switch::On),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ExecArgs {
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Samples per assignment chunk.
    #[arg(long = "chunk-size")]
    pub chunk_size: Option<usize>,
}

impl ExecArgs {
    pub fn exec(&self) -> ExecutionConfig {
        ExecutionConfig {
            workers: self.workers,
            chunk_size: self.chunk_size,
        }
    }
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Artifact directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Synthetic dataset description (TOML, or JSON with a .json extension).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for the field, points and truth labels.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the description.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to the threshold recorded with the segmentation.
    #[arg(long = "eps-m")]
    pub eps_m: Option<f64>,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Inclusive range predicates such as `p_c=0.9:1.1`.
    #[arg(value_name = "PROPERTY=MIN:MAX")]
    pub predicates: Vec<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Sample counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "100000,200000,400000,800000")]
    pub samples: Vec<usize>,
    /// Seed counts to sweep; repeat the flag for more than one.
    #[arg(long, value_parser = parse_k, value_name = "KX,KY,KZ,KT")]
    pub k: Vec<[usize; 4]>,
    /// Repetitions per configuration; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
    /// Normalization of the dataset loaded at startup.
    #[arg(long, value_enum, default_value = "on")]
    pub normalize: Switch,
    /// Artifact directory; existing artifacts for the same dataset are reused.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}
