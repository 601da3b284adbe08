//! The iterative 4D clustering core.
//!
//! Centers are seeded on a regular 4D grid, every sample is attached to its
//! nearest seed, and then the loop alternates between recomputing centers from
//! their members and reassigning each sample to the best center inside a
//! window of one seed interval around it. The loop stops once no center value
//! changes by more than the convergence threshold, relative to its old value.
//!
//! Assignment is data-parallel over samples; center sums are reduced in fixed
//! blocks so results are bit-identical for any worker count or chunk size.

pub mod accum;
pub mod assign;
pub mod grid;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use accum::{Accumulator, SampleKind};
pub use assign::{assign_sample, field_distance, point_distance};
pub use grid::CenterGrid;

use crate::error::{Error, Result};
use crate::model::{
    interval_distances, validate_counts, ClusterCenter, ClusterId, ClusterParams, DomainExtent,
    FieldSample, Location, PointSample, Sample, Segmentation,
};

/// Guards relative-change tests against zero denominators.
pub const RELATIVE_GUARD: f64 = 1e-12;

/// Seeds at the midpoints of a `k` grid over the extent, ids t-major then z, y, x.
pub fn seed_centers(extent: &DomainExtent, k: [usize; 4]) -> Result<Vec<ClusterCenter>> {
    validate_counts(k)?;
    let c = interval_distances(extent, k)?;
    let lo = extent.lower();
    let coord = |axis: usize, j: usize| lo[axis] + (j as f64 + 0.5) * c[axis];
    let mut centers = Vec::with_capacity(k.iter().product());
    for it in 0..k[3] {
        for iz in 0..k[2] {
            for iy in 0..k[1] {
                for ix in 0..k[0] {
                    let id = ClusterId(centers.len() as u32);
                    let loc = Location::new(coord(0, ix), coord(1, iy), coord(2, iz), coord(3, it));
                    centers.push(ClusterCenter::seed(id, loc));
                }
            }
        }
    }
    Ok(centers)
}

/// New centers from the accumulated sums. Clusters that ended up empty keep
/// their previous center and are marked dormant.
pub fn update_centers(acc: &[Accumulator], previous: &[ClusterCenter]) -> Vec<ClusterCenter> {
    acc.iter()
        .zip(previous)
        .map(|(a, prev)| {
            a.finalize(prev.id).unwrap_or(ClusterCenter {
                n_points: 0,
                n_fields: 0,
                dormant: true,
                ..*prev
            })
        })
        .collect()
}

#[inline]
fn relative_change(old: f64, new: f64) -> f64 {
    (new - old).abs() / (old.abs() + RELATIVE_GUARD)
}

fn optional_change(old: Option<f64>, new: Option<f64>) -> f64 {
    match (old, new) {
        (None, None) => 0.0,
        (Some(a), Some(b)) => relative_change(a, b),
        _ => f64::INFINITY,
    }
}

/// Largest relative change of any of the six values over non-dormant centers.
pub fn max_relative_change(old: &[ClusterCenter], new: &[ClusterCenter]) -> f64 {
    old.iter()
        .zip(new)
        .filter(|(_, n)| !n.dormant)
        .map(|(o, n)| {
            [
                relative_change(o.x, n.x),
                relative_change(o.y, n.y),
                relative_change(o.z, n.z),
                relative_change(o.t, n.t),
                optional_change(o.point_value, n.point_value),
                optional_change(o.field_value, n.field_value),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// True when every non-dormant center moved by less than `eps` in all six values.
pub fn has_converged(old: &[ClusterCenter], new: &[ClusterCenter], eps: f64) -> bool {
    debug_assert_eq!(old.len(), new.len());
    max_relative_change(old, new) < eps
}

/// Progress report emitted once per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationProgress {
    pub iteration: usize,
    pub max_center_delta: f64,
    pub dormant: usize,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
}

mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        f64::deserialize(d).map(Duration::from_secs_f64)
    }
}

pub trait ProgressSink {
    fn on_iteration(&mut self, progress: &IterationProgress);
}

impl<F: FnMut(&IterationProgress)> ProgressSink for F {
    fn on_iteration(&mut self, progress: &IterationProgress) {
        self(progress)
    }
}

/// A sink that ignores progress.
pub struct Quiet;

impl ProgressSink for Quiet {
    fn on_iteration(&mut self, _: &IterationProgress) {}
}

/// How the data-parallel phases are scheduled. Has no effect on results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Worker threads; 0 uses the machine's parallelism.
    pub workers: usize,
    /// Samples per assignment chunk; `None` assigns everything at once.
    pub chunk_size: Option<usize>,
}

/// Labels for both sample kinds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    pub point_labels: Vec<ClusterId>,
    pub field_labels: Vec<ClusterId>,
}

pub struct Engine {
    params: ClusterParams,
    exec: ExecutionConfig,
    pool: rayon::ThreadPool,
}

impl Engine {
    pub fn new(params: ClusterParams, exec: ExecutionConfig) -> Result<Self> {
        params.validate()?;
        if exec.chunk_size == Some(0) {
            return Err(Error::param("chunk_size", "must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(exec.workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        Ok(Self { params, exec, pool })
    }

    pub fn params(&self) -> &ClusterParams {
        &self.params
    }

    fn label_all<S, F>(&self, samples: &[S], label: F) -> Vec<ClusterId>
    where
        S: Sample,
        F: Fn(&S) -> ClusterId + Sync,
    {
        let mut labels = vec![ClusterId(0); samples.len()];
        let chunk = self.exec.chunk_size.unwrap_or(samples.len()).max(1);
        self.pool.install(|| {
            for (src, dst) in samples.chunks(chunk).zip(labels.chunks_mut(chunk)) {
                src.par_iter()
                    .zip(dst.par_iter_mut())
                    .with_min_len(256)
                    .for_each(|(s, l)| *l = label(s));
            }
        });
        labels
    }

    /// Nearest center in space-time distance; sample values play no part.
    pub fn initial_assignment(&self, points: &[PointSample], fields: &[FieldSample], grid: &CenterGrid) -> Assignment {
        let cf = self.params.time_scale;
        Assignment {
            point_labels: self.label_all(points, |s| ClusterId(grid.nearest(&s.location(), cf))),
            field_labels: self.label_all(fields, |s| ClusterId(grid.nearest(&s.location(), cf))),
        }
    }

    /// One windowed reassignment of every sample against `centers`.
    pub fn assign_iteration(
        &self,
        points: &[PointSample],
        fields: &[FieldSample],
        centers: &[ClusterCenter],
        grid: &CenterGrid,
    ) -> Assignment {
        let p = &self.params;
        Assignment {
            point_labels: self.label_all(points, |s| assign_sample(s, SampleKind::Point, centers, grid, p)),
            field_labels: self.label_all(fields, |s| assign_sample(s, SampleKind::Field, centers, grid, p)),
        }
    }

    /// Per-cluster sums for a labelling over `clusters` ids.
    pub fn accumulate(
        &self,
        points: &[PointSample],
        fields: &[FieldSample],
        assignment: &Assignment,
        clusters: usize,
    ) -> Vec<Accumulator> {
        let mut acc = vec![Accumulator::default(); clusters];
        self.pool.install(|| {
            accum::accumulate(points, &assignment.point_labels, SampleKind::Point, &mut acc);
            accum::accumulate(fields, &assignment.field_labels, SampleKind::Field, &mut acc);
        });
        acc
    }

    /// Runs the full clustering loop.
    pub fn run(
        &self,
        points: &[PointSample],
        fields: &[FieldSample],
        extent: &DomainExtent,
        sink: &mut dyn ProgressSink,
    ) -> Result<Segmentation> {
        if points.is_empty() && fields.is_empty() {
            return Err(Error::param("samples", "nothing to cluster"));
        }
        let k = self.params.k;
        let mut centers = seed_centers(extent, k)?;
        let grid = CenterGrid::build(&centers, extent, k)?;
        let mut assignment = self.initial_assignment(points, fields, &grid);

        let mut iterations = 0;
        let converged = loop {
            let started = Instant::now();
            let acc = self.accumulate(points, fields, &assignment, centers.len());
            let updated = update_centers(&acc, &centers);
            iterations += 1;
            let delta = max_relative_change(&centers, &updated);
            let done = delta < self.params.convergence_eps;
            centers = updated;
            if !done && iterations < self.params.max_iterations {
                let grid = CenterGrid::build(&centers, extent, k)?;
                assignment = self.assign_iteration(points, fields, &centers, &grid);
            }
            sink.on_iteration(&IterationProgress {
                iteration: iterations,
                max_center_delta: delta,
                dormant: centers.iter().filter(|c| c.dormant).count(),
                elapsed: started.elapsed(),
            });
            if done {
                break true;
            }
            if iterations >= self.params.max_iterations {
                log::warn!("stopped after {iterations} iterations without converging");
                break false;
            }
        };

        Ok(Segmentation {
            point_labels: assignment.point_labels,
            field_labels: assignment.field_labels,
            centers: centers.into_iter().filter(|c| c.members() > 0).collect(),
            params: self.params.clone(),
            iterations_used: iterations,
            converged,
            merge_map: None,
        })
    }

    /// Wall time of one update + reassignment step, starting from the initial
    /// assignment. Setup is not timed.
    pub fn time_iteration(
        &self,
        points: &[PointSample],
        fields: &[FieldSample],
        extent: &DomainExtent,
    ) -> Result<Duration> {
        let k = self.params.k;
        let seeds = seed_centers(extent, k)?;
        let grid = CenterGrid::build(&seeds, extent, k)?;
        let assignment = self.initial_assignment(points, fields, &grid);

        let started = Instant::now();
        let acc = self.accumulate(points, fields, &assignment, seeds.len());
        let centers = update_centers(&acc, &seeds);
        let grid = CenterGrid::build(&centers, extent, k)?;
        let next = self.assign_iteration(points, fields, &centers, &grid);
        let elapsed = started.elapsed();
        std::hint::black_box(next);
        Ok(elapsed)
    }
}
