use rayon::prelude::*;

use crate::model::{ClusterCenter, ClusterId, Location, Sample};

/// Samples per reduction block. Partial sums are formed per block in sample
/// order and folded in block order, so the result does not depend on how many
/// workers ran or how assignment was chunked.
pub const REDUCTION_BLOCK: usize = 4096;

/// Running sums for one cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub location_sum: [f64; 4],
    pub point_sum: f64,
    pub field_sum: f64,
    pub n_points: u64,
    pub n_fields: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Point,
    Field,
}

impl Accumulator {
    #[inline]
    pub fn add(&mut self, kind: SampleKind, loc: &Location, value: f64) {
        self.location_sum[0] += loc.x;
        self.location_sum[1] += loc.y;
        self.location_sum[2] += loc.z;
        self.location_sum[3] += loc.t;
        match kind {
            SampleKind::Point => {
                self.point_sum += value;
                self.n_points += 1;
            }
            SampleKind::Field => {
                self.field_sum += value;
                self.n_fields += 1;
            }
        }
    }

    #[inline]
    pub fn merge(&mut self, other: &Accumulator) {
        for i in 0..4 {
            self.location_sum[i] += other.location_sum[i];
        }
        self.point_sum += other.point_sum;
        self.field_sum += other.field_sum;
        self.n_points += other.n_points;
        self.n_fields += other.n_fields;
    }

    pub fn members(&self) -> u64 {
        self.n_points + self.n_fields
    }

    /// Center holding the means, or `None` for an empty cluster.
    pub fn finalize(&self, id: ClusterId) -> Option<ClusterCenter> {
        let n = self.members();
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(ClusterCenter {
            id,
            x: self.location_sum[0] / n,
            y: self.location_sum[1] / n,
            z: self.location_sum[2] / n,
            t: self.location_sum[3] / n,
            point_value: (self.n_points > 0).then(|| self.point_sum / self.n_points as f64),
            field_value: (self.n_fields > 0).then(|| self.field_sum / self.n_fields as f64),
            n_points: self.n_points,
            n_fields: self.n_fields,
            dormant: false,
        })
    }
}

/// Adds `samples` (labelled by `labels`) into `acc`, which is indexed by cluster id.
///
/// Must be called inside the thread pool that should do the work.
pub fn accumulate<S: Sample>(samples: &[S], labels: &[ClusterId], kind: SampleKind, acc: &mut [Accumulator]) {
    debug_assert_eq!(samples.len(), labels.len());
    let k = acc.len();
    let partials: Vec<Vec<(u32, Accumulator)>> = samples
        .par_chunks(REDUCTION_BLOCK)
        .zip(labels.par_chunks(REDUCTION_BLOCK))
        .map_init(
            || (vec![Accumulator::default(); k], Vec::<u32>::new()),
            |(scratch, touched), (block, block_labels)| {
                for (s, l) in block.iter().zip(block_labels) {
                    let slot = &mut scratch[l.index()];
                    if slot.members() == 0 {
                        touched.push(l.0);
                    }
                    slot.add(kind, &s.location(), s.value());
                }
                touched.sort_unstable();
                let out = touched
                    .drain(..)
                    .map(|id| (id, std::mem::take(&mut scratch[id as usize])))
                    .collect();
                out
            },
        )
        .collect();
    for block in &partials {
        for (id, partial) in block {
            acc[*id as usize].merge(partial);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PointSample;

    #[test]
    fn blocks_fold_in_a_fixed_order() {
        let samples: Vec<PointSample> = (0..3 * REDUCTION_BLOCK + 17)
            .map(|i| PointSample {
                trajectory_id: 0,
                t: (i as f64).sin(),
                x: i as f64 * 0.1,
                y: 1.0 / (i as f64 + 1.0),
                z: 0.0,
                value: (i % 7) as f64 * 0.3,
            })
            .collect();
        let labels: Vec<ClusterId> = (0..samples.len()).map(|i| ClusterId((i % 5) as u32)).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut acc = vec![Accumulator::default(); 5];
            pool.install(|| accumulate(&samples, &labels, SampleKind::Point, &mut acc));
            acc
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one.iter().map(|a| a.n_points).sum::<u64>(), samples.len() as u64);
    }

    #[test]
    fn finalize_means() {
        let mut a = Accumulator::default();
        a.add(SampleKind::Point, &Location::new(0.0, 0.0, 0.0, 0.0), 1.0);
        a.add(SampleKind::Point, &Location::new(2.0, 0.0, 0.0, 0.0), 3.0);
        a.add(SampleKind::Field, &Location::new(1.0, 0.0, 0.0, 0.0), 2.0);
        let c = a.finalize(ClusterId(4)).unwrap();
        assert_eq!((c.x, c.y, c.z, c.t), (1.0, 0.0, 0.0, 0.0));
        assert_eq!(c.point_value, Some(2.0));
        assert_eq!(c.field_value, Some(2.0));
        assert_eq!((c.n_points, c.n_fields), (2, 1));
        assert!(Accumulator::default().finalize(ClusterId(0)).is_none());
    }
}
