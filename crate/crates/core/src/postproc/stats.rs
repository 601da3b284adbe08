use serde::{Deserialize, Serialize};

use crate::model::{Location, Sample};

/// Mean and population standard deviation of one value kind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueStats {
    pub mean: f64,
    pub std: f64,
}

/// Summary of the samples in one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub n_points: u64,
    pub n_fields: u64,
    pub point: Option<ValueStats>,
    pub field: Option<ValueStats>,
    /// Lower corner of the 4D bounding box (`x, y, z, t`).
    pub bbox_min: [f64; 4],
    pub bbox_max: [f64; 4],
}

impl FeatureStats {
    /// Side lengths of the bounding box; the last entry is in time units.
    pub fn extent(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|a| self.bbox_max[a] - self.bbox_min[a])
    }
}

/// Welford running mean and variance, fed in sample order.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn finish(&self) -> Option<ValueStats> {
        (self.n > 0).then(|| ValueStats {
            mean: self.mean,
            std: (self.m2 / self.n as f64).max(0.0).sqrt(),
        })
    }
}

/// Incremental builder for [`FeatureStats`].
#[derive(Clone, Debug)]
pub struct StatsBuilder {
    point: Moments,
    field: Moments,
    lo: [f64; 4],
    hi: [f64; 4],
}

impl Default for StatsBuilder {
    fn default() -> Self {
        Self {
            point: Moments::default(),
            field: Moments::default(),
            lo: [f64::INFINITY; 4],
            hi: [f64::NEG_INFINITY; 4],
        }
    }
}

impl StatsBuilder {
    fn extend_box(&mut self, loc: &Location) {
        for (a, v) in loc.to_array().into_iter().enumerate() {
            self.lo[a] = self.lo[a].min(v);
            self.hi[a] = self.hi[a].max(v);
        }
    }

    pub fn add_point(&mut self, s: &impl Sample) {
        self.extend_box(&s.location());
        self.point.push(s.value());
    }

    pub fn add_field(&mut self, s: &impl Sample) {
        self.extend_box(&s.location());
        self.field.push(s.value());
    }

    /// `None` when nothing was added.
    pub fn finish(&self) -> Option<FeatureStats> {
        if self.point.n + self.field.n == 0 {
            return None;
        }
        Some(FeatureStats {
            n_points: self.point.n,
            n_fields: self.field.n,
            point: self.point.finish(),
            field: self.field.finish(),
            bbox_min: self.lo,
            bbox_max: self.hi,
        })
    }
}

/// Statistics over the given point and field members.
pub fn feature_stats<'a, P, F>(
    points: impl IntoIterator<Item = &'a P>,
    fields: impl IntoIterator<Item = &'a F>,
) -> Option<FeatureStats>
where
    P: Sample + 'a,
    F: Sample + 'a,
{
    let mut b = StatsBuilder::default();
    for p in points {
        b.add_point(p);
    }
    for f in fields {
        b.add_field(f);
    }
    b.finish()
}
