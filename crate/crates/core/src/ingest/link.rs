//! Point-to-cell linking: which point samples fall inside each grid cell
//! during each field timestep interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::field::GridGeometry;
use crate::model::PointSample;

/// A grid cell during one field timestep interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BucketKey {
    pub interval: u32,
    pub cell: [u32; 3],
}

/// Index of the interval `[times[m], times[m+1])` holding `t`, with the last
/// interval closed. A single timestep forms one degenerate interval.
pub fn time_interval(times: &[f64], t: f64) -> Option<u32> {
    let first = *times.first()?;
    let last = *times.last()?;
    if !(t >= first && t <= last) {
        return None;
    }
    let intervals = times.len().saturating_sub(1).max(1);
    let m = times.partition_point(|&x| x <= t).saturating_sub(1);
    Some(m.min(intervals - 1) as u32)
}

/// Buckets of point indices, sorted by key, each bucket in ascending index order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkIndex {
    keys: Vec<BucketKey>,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    /// Points that fell outside the grid or the field time span.
    pub unlinked: usize,
}

impl LinkIndex {
    pub fn build(geometry: &GridGeometry, times: &[f64], points: &[PointSample]) -> Self {
        let mut keyed: Vec<(BucketKey, u32)> = points
            .par_iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let cell = geometry.locate(p.x, p.y, p.z)?;
                let interval = time_interval(times, p.t)?;
                Some((BucketKey { interval, cell }, i as u32))
            })
            .collect();
        let unlinked = points.len() - keyed.len();
        keyed.par_sort_unstable();

        let mut keys = Vec::new();
        let mut offsets = vec![0];
        let mut indices = Vec::with_capacity(keyed.len());
        for (key, idx) in keyed {
            if keys.last() != Some(&key) {
                if !keys.is_empty() {
                    offsets.push(indices.len());
                }
                keys.push(key);
            }
            indices.push(idx);
        }
        offsets.push(indices.len());
        if keys.is_empty() {
            offsets = vec![0];
        }
        Self {
            keys,
            offsets,
            indices,
            unlinked,
        }
    }

    pub fn bucket(&self, key: BucketKey) -> &[u32] {
        match self.keys.binary_search(&key) {
            Ok(i) => &self.indices[self.offsets[i]..self.offsets[i + 1]],
            Err(_) => &[],
        }
    }

    /// Non-empty buckets in key order.
    pub fn iter(&self) -> impl Iterator<Item = (BucketKey, &[u32])> {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, &self.indices[self.offsets[i]..self.offsets[i + 1]]))
    }

    pub fn bucket_count(&self) -> usize {
        self.keys.len()
    }

    pub fn linked(&self) -> usize {
        self.indices.len()
    }
}
