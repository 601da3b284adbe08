//! Uniform 4D binning of cluster centers for windowed and nearest lookups.

use crate::error::Result;
use crate::model::{interval_distances, space_time_distance, ClusterCenter, DomainExtent, Location};

/// Centers binned by their current location into cells of one seed interval.
///
/// Bins are stored CSR-style in x-fastest order so that a run of bins along x
/// is one contiguous slice of center ids.
#[derive(Clone, Debug)]
pub struct CenterGrid {
    lower: [f64; 4],
    cell: [f64; 4],
    dims: [usize; 4],
    offsets: Vec<u32>,
    members: Vec<u32>,
    locations: Vec<[f64; 4]>,
}

impl CenterGrid {
    pub fn build(centers: &[ClusterCenter], extent: &DomainExtent, k: [usize; 4]) -> Result<Self> {
        let cell = interval_distances(extent, k)?;
        let mut grid = Self {
            lower: extent.lower(),
            cell,
            dims: k,
            offsets: Vec::new(),
            members: Vec::with_capacity(centers.len()),
            locations: centers.iter().map(|c| c.location().to_array()).collect(),
        };
        let bins = k.iter().product::<usize>();
        let bin_of: Vec<usize> = grid
            .locations
            .iter()
            .map(|loc| grid.bin_index(grid.bin_coords(loc)))
            .collect();
        let mut counts = vec![0u32; bins + 1];
        for &b in &bin_of {
            counts[b + 1] += 1;
        }
        for i in 0..bins {
            counts[i + 1] += counts[i];
        }
        grid.members = vec![0; centers.len()];
        let mut cursor = counts.clone();
        // ids ascend within each bin because centers are visited in id order
        for (id, &b) in bin_of.iter().enumerate() {
            grid.members[cursor[b] as usize] = id as u32;
            cursor[b] += 1;
        }
        grid.offsets = counts;
        Ok(grid)
    }

    /// Seed interval along each axis; the last entry is in time units.
    pub fn interval(&self) -> [f64; 4] {
        self.cell
    }

    pub fn center_count(&self) -> usize {
        self.locations.len()
    }

    #[inline]
    fn bin_coord(&self, axis: usize, v: f64) -> usize {
        let b = ((v - self.lower[axis]) / self.cell[axis]).floor();
        if b <= 0.0 {
            0
        } else {
            (b as usize).min(self.dims[axis] - 1)
        }
    }

    #[inline]
    fn bin_coords(&self, loc: &[f64; 4]) -> [usize; 4] {
        [
            self.bin_coord(0, loc[0]),
            self.bin_coord(1, loc[1]),
            self.bin_coord(2, loc[2]),
            self.bin_coord(3, loc[3]),
        ]
    }

    #[inline]
    fn bin_index(&self, b: [usize; 4]) -> usize {
        ((b[3] * self.dims[2] + b[2]) * self.dims[1] + b[1]) * self.dims[0] + b[0]
    }

    /// Ids of centers in bins `[x0, x1]` of the row `(y, z, t)`.
    #[inline]
    fn row(&self, x0: usize, x1: usize, y: usize, z: usize, t: usize) -> &[u32] {
        let start = self.bin_index([x0, y, z, t]);
        let end = self.bin_index([x1, y, z, t]) + 1;
        &self.members[self.offsets[start] as usize..self.offsets[end] as usize]
    }

    /// Calls `f` with every center id whose location differs from `loc` by at
    /// most `half[i]` along each axis.
    #[inline]
    pub fn for_each_in_window(&self, loc: &[f64; 4], half: [f64; 4], mut f: impl FnMut(u32)) {
        let mut lo = [0usize; 4];
        let mut hi = [0usize; 4];
        for axis in 0..4 {
            lo[axis] = self.bin_coord(axis, loc[axis] - half[axis]);
            hi[axis] = self.bin_coord(axis, loc[axis] + half[axis]);
        }
        for t in lo[3]..=hi[3] {
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for &id in self.row(lo[0], hi[0], y, z, t) {
                        let c = &self.locations[id as usize];
                        if (c[0] - loc[0]).abs() <= half[0]
                            && (c[1] - loc[1]).abs() <= half[1]
                            && (c[2] - loc[2]).abs() <= half[2]
                            && (c[3] - loc[3]).abs() <= half[3]
                        {
                            f(id);
                        }
                    }
                }
            }
        }
    }

    /// Id of the center closest to `loc` in space-time distance, lowest id on ties.
    pub fn nearest(&self, loc: &Location, time_scale: f64) -> u32 {
        let l = loc.to_array();
        let home = self.bin_coords(&l);
        let total_bins: usize = self.dims.iter().product();
        let min_width = self.cell[..3]
            .iter()
            .copied()
            .fold(self.cell[3] * time_scale, f64::min);

        let mut best = (f64::INFINITY, u32::MAX);
        let consider = |id: u32, best: &mut (f64, u32)| {
            let d = space_time_distance(loc, &Location::from_array(self.locations[id as usize]), time_scale);
            if d < best.0 || (d == best.0 && id < best.1) {
                *best = (d, id);
            }
        };

        for r in 0usize.. {
            let side = 2 * r + 1;
            if side.saturating_pow(4) > total_bins || r > *self.dims.iter().max().unwrap() {
                for id in 0..self.locations.len() as u32 {
                    consider(id, &mut best);
                }
                break;
            }
            let lo = home.map(|h| h.saturating_sub(r));
            let hi = [0, 1, 2, 3].map(|a| (home[a] + r).min(self.dims[a] - 1));
            for t in lo[3]..=hi[3] {
                for z in lo[2]..=hi[2] {
                    for y in lo[1]..=hi[1] {
                        for x in lo[0]..=hi[0] {
                            let b = [x, y, z, t];
                            let ring = (0..4).map(|a| b[a].abs_diff(home[a])).max().unwrap();
                            if ring != r {
                                continue;
                            }
                            for &id in self.row(x, x, y, z, t) {
                                consider(id, &mut best);
                            }
                        }
                    }
                }
            }
            // bins beyond ring r are at least r full cells away
            if best.0 < r as f64 * min_width {
                break;
            }
        }
        best.1
    }
}
