//! Single-iteration timing over synthetic workloads of a chosen size.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, ExecutionConfig};
use crate::error::Result;
use crate::ingest::GridGeometry;
use crate::model::{ClusterParams, DomainExtent, FieldSample, PointSample};

const FIELD_STEPS: usize = 4;
const TRAJECTORY_LEN: usize = 50;

/// Samples with uniformly random positions and values, about half of each kind.
#[derive(Clone, Debug)]
pub struct Workload {
    pub extent: DomainExtent,
    pub points: Vec<PointSample>,
    pub fields: Vec<FieldSample>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.points.len() + self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exactly `n` samples in `[0, 100]^3 x [0, 10]`.
pub fn workload(n: usize, seed: u64) -> Workload {
    let extent = DomainExtent::new([0.0; 3], [100.0; 3], 0.0, 10.0).expect("fixed extent is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cells_wanted = (n / 2 / FIELD_STEPS).max(1);
    let side = (cells_wanted as f64).cbrt().floor().max(1.0) as usize;
    let nz = (cells_wanted / (side * side)).max(1);
    let dims = [side, side, nz];
    let geometry = GridGeometry {
        dims,
        origin: [0.0; 3],
        spacing: [0, 1, 2].map(|a| 100.0 / dims[a] as f64),
    };
    let cells = geometry.cell_count();
    let mut fields = Vec::with_capacity(cells * FIELD_STEPS);
    for step in 0..FIELD_STEPS {
        let t = 10.0 * step as f64 / (FIELD_STEPS - 1) as f64;
        for index in 0..cells {
            if fields.len() == n {
                break;
            }
            let cell = geometry.cell_of_linear(index);
            let [x, y, z] = geometry.cell_center(cell);
            fields.push(FieldSample {
                cell,
                timestep: step as u32,
                x,
                y,
                z,
                t,
                value: rng.random(),
            });
        }
    }

    let n_points = n - fields.len();
    let points = (0..n_points)
        .map(|i| PointSample {
            trajectory_id: (i / TRAJECTORY_LEN) as u64,
            t: 10.0 * (i % TRAJECTORY_LEN) as f64 / (TRAJECTORY_LEN - 1) as f64,
            x: rng.random_range(0.0..100.0),
            y: rng.random_range(0.0..100.0),
            z: rng.random_range(0.0..100.0),
            value: rng.random(),
        })
        .collect();
    Workload { extent, points, fields }
}

/// Median wall time of `reps` single update + reassignment steps.
pub fn time_single_iteration(
    work: &Workload,
    params: &ClusterParams,
    exec: ExecutionConfig,
    reps: usize,
) -> Result<Duration> {
    let engine = Engine::new(params.clone(), exec)?;
    let mut times = (0..reps.max(1))
        .map(|_| engine.time_iteration(&work.points, &work.fields, &work.extent))
        .collect::<Result<Vec<_>>>()?;
    times.sort_unstable();
    Ok(times[times.len() / 2])
}

/// One measured configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub samples: usize,
    pub k: [usize; 4],
    pub clusters: usize,
    pub workers: usize,
    pub seconds: f64,
}

/// Times every combination of sample count and seed counts.
pub fn sweep(
    sample_counts: &[usize],
    cluster_counts: &[[usize; 4]],
    exec: ExecutionConfig,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in sample_counts {
        let work = workload(n, seed);
        for &k in cluster_counts {
            let params = ClusterParams { k, ..ClusterParams::default() };
            let t = time_single_iteration(&work, &params, exec, reps)?;
            rows.push(BenchRow {
                samples: work.len(),
                k,
                clusters: params.total_clusters(),
                workers: exec.workers,
                seconds: t.as_secs_f64(),
            });
        }
    }
    Ok(rows)
}
