use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{FeatureStats, StatsBuilder};
use crate::model::{ClusterId, FieldSample, PointSample, Segmentation};

/// A run of samples from one trajectory at consecutive point timesteps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Polyline {
    pub trajectory_id: u64,
    /// Point sample indices in time order; at least two.
    pub samples: Vec<u32>,
}

/// One merged cluster materialized as trajectory pieces and voxel sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub id: ClusterId,
    pub members: Vec<ClusterId>,
    pub polylines: Vec<Polyline>,
    /// Point samples with no same-feature neighbour at an adjacent timestep.
    pub isolated: Vec<u32>,
    /// Field timestep index to ascending linear cell indices.
    pub voxels: BTreeMap<u32, Vec<u32>>,
    pub stats: FeatureStats,
}

impl Feature {
    pub fn point_count(&self) -> usize {
        self.polylines.iter().map(|p| p.samples.len()).sum::<usize>() + self.isolated.len()
    }
}

/// Sorted distinct sample times; a point's timestep is its position here.
pub fn point_timesteps(points: &[PointSample]) -> Vec<f64> {
    let mut times: Vec<f64> = points.iter().map(|p| p.t).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn timestep_of(times: &[f64], t: f64) -> usize {
    times.partition_point(|v| *v < t)
}

/// Point sample indices grouped by trajectory, each group in time order.
pub fn trajectories(points: &[PointSample]) -> Vec<Vec<u32>> {
    let mut order: Vec<u32> = (0..points.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a as usize], &points[b as usize]);
        pa.trajectory_id
            .cmp(&pb.trajectory_id)
            .then(pa.t.total_cmp(&pb.t))
            .then(a.cmp(&b))
    });
    order
        .chunk_by(|&a, &b| points[a as usize].trajectory_id == points[b as usize].trajectory_id)
        .map(<[u32]>::to_vec)
        .collect()
}

/// Splits one time-ordered trajectory into runs that share a feature and sit
/// at consecutive timesteps. Returns `(feature, samples)` pairs in order.
pub fn split_trajectory(
    samples: &[u32],
    steps: &[usize],
    feature_of: impl Fn(u32) -> ClusterId,
) -> Vec<(ClusterId, Vec<u32>)> {
    let mut runs: Vec<(ClusterId, Vec<u32>)> = Vec::new();
    let mut prev_step = None;
    for (&s, &step) in samples.iter().zip(steps) {
        let f = feature_of(s);
        let extends = matches!((runs.last(), prev_step), (Some((rf, _)), Some(p)) if *rf == f && step == p + 1);
        if extends {
            runs.last_mut().expect("checked").1.push(s);
        } else {
            runs.push((f, vec![s]));
        }
        prev_step = Some(step);
    }
    runs
}

/// One feature per merged cluster, sorted by feature id.
///
/// Field samples must be timestep-major with the same number of cells in every
/// timestep, as produced by ingest.
pub fn build_features(seg: &Segmentation, points: &[PointSample], fields: &[FieldSample]) -> Vec<Feature> {
    debug_assert_eq!(points.len(), seg.point_labels.len());
    debug_assert_eq!(fields.len(), seg.field_labels.len());

    let mut slot: BTreeMap<ClusterId, usize> = BTreeMap::new();
    let mut features: Vec<Feature> = Vec::new();
    let mut members: BTreeMap<ClusterId, Vec<ClusterId>> = BTreeMap::new();
    for c in &seg.centers {
        members.entry(seg.feature_of(c.id)).or_default().push(c.id);
    }
    for (id, m) in members {
        slot.insert(id, features.len());
        features.push(Feature {
            id,
            members: m,
            polylines: Vec::new(),
            isolated: Vec::new(),
            voxels: BTreeMap::new(),
            stats: FeatureStats {
                n_points: 0,
                n_fields: 0,
                point: None,
                field: None,
                bbox_min: [0.0; 4],
                bbox_max: [0.0; 4],
            },
        });
    }
    let index_of = |label: ClusterId| -> usize {
        let f = seg.feature_of(label);
        *slot.get(&f).unwrap_or_else(|| panic!("label {label} has no live center"))
    };
    let mut builders = vec![StatsBuilder::default(); features.len()];

    let times = point_timesteps(points);
    for traj in trajectories(points) {
        let steps: Vec<usize> = traj.iter().map(|&i| timestep_of(&times, points[i as usize].t)).collect();
        let runs = split_trajectory(&traj, &steps, |i| seg.feature_of(seg.point_labels[i as usize]));
        let trajectory_id = points[traj[0] as usize].trajectory_id;
        for (f, run) in runs {
            let feature = &mut features[slot[&f]];
            if run.len() >= 2 {
                feature.polylines.push(Polyline { trajectory_id, samples: run });
            } else {
                feature.isolated.extend(run);
            }
        }
    }
    for (i, p) in points.iter().enumerate() {
        builders[index_of(seg.point_labels[i])].add_point(p);
    }

    let cells = fields.iter().take_while(|s| s.timestep == fields[0].timestep).count().max(1);
    for (i, s) in fields.iter().enumerate() {
        let k = index_of(seg.field_labels[i]);
        builders[k].add_field(s);
        features[k].voxels.entry(s.timestep).or_default().push((i % cells) as u32);
    }

    for (feature, b) in features.iter_mut().zip(&builders) {
        feature.isolated.sort_unstable();
        if let Some(stats) = b.finish() {
            feature.stats = stats;
        }
    }
    features.retain(|f| f.stats.n_points + f.stats.n_fields > 0);
    features
}
