//! Seeded synthetic datasets with known ground truth.
//!
//! A dataset is a background (uniform or striped) plus a list of blobs. Each
//! blob is a region of space that exists over a time span, drifts with a fixed
//! velocity, carries its own field value inside the region and spawns
//! trajectories that travel with it. Every generated sample records the label
//! of its source: 0 for background, `b + 1` for blob `b`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::field::{data_file_name, write_field, Dtype, FieldGrid, GridGeometry};
use crate::ingest::points::write_points;
use crate::model::{DomainExtent, Location, PointSample};

pub const FIELD_META_FILE: &str = "field.toml";
pub const POINTS_FILE: &str = "points.csv";
pub const FIELD_TRUTH_FILE: &str = "truth_field.txt";
pub const POINT_TRUTH_FILE: &str = "truth_points.txt";

pub const BACKGROUND_LABEL: u32 = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Ellipsoid,
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    #[serde(default)]
    pub shape: Shape,
    /// Region center at the start of the time span.
    pub center: [f64; 3],
    /// Semi-axes (ellipsoid) or half-widths (box).
    pub radius: [f64; 3],
    /// Defaults to the whole time extent.
    #[serde(default)]
    pub time_span: Option<[f64; 2]>,
    #[serde(default)]
    pub velocity: [f64; 3],
    pub field_value: f64,
    pub point_value: f64,
    /// Number of trajectories travelling with the blob.
    #[serde(default)]
    pub trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stripes {
    pub axis: usize,
    pub width: f64,
    pub field_values: [f64; 2],
    pub point_values: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub field_value: f64,
    pub point_value: f64,
    #[serde(default)]
    pub trajectories: usize,
    /// Per-axis speed bound of background trajectories.
    #[serde(default)]
    pub speed: f64,
    /// Alternating values along one axis instead of a uniform background.
    #[serde(default)]
    pub stripes: Option<Stripes>,
}

/// Half-widths of uniform noise added to each sample value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    #[serde(default)]
    pub field: f64,
    #[serde(default)]
    pub point: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub extent: DomainExtent,
    pub grid: [usize; 3],
    pub field_timesteps: usize,
    pub point_timesteps: usize,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    pub background: Background,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub seed: u64,
}

/// Generated samples and their source labels, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub field: FieldGrid,
    pub points: Vec<PointSample>,
    pub field_truth: Vec<u32>,
    pub point_truth: Vec<u32>,
}

impl Blob {
    fn span(&self, extent: &DomainExtent) -> [f64; 2] {
        self.time_span.unwrap_or([extent.t_min, extent.t_max])
    }

    fn center_at(&self, t0: f64, t: f64) -> [f64; 3] {
        let dt = t - t0;
        [
            self.center[0] + self.velocity[0] * dt,
            self.center[1] + self.velocity[1] * dt,
            self.center[2] + self.velocity[2] * dt,
        ]
    }

    /// Shape norm of an offset: at most 1 inside the region.
    fn norm(&self, offset: [f64; 3]) -> f64 {
        let q = [0, 1, 2].map(|a| offset[a] / self.radius[a]);
        match self.shape {
            Shape::Ellipsoid => (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt(),
            Shape::Box => q.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    fn contains(&self, extent: &DomainExtent, loc: &Location) -> bool {
        let [t0, t1] = self.span(extent);
        if loc.t < t0 || loc.t > t1 {
            return false;
        }
        let c = self.center_at(t0, loc.t);
        self.norm([loc.x - c[0], loc.y - c[1], loc.z - c[2]]) <= 1.0
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.extent.validate()?;
        if self.grid.contains(&0) {
            return Err(Error::Spec("grid dimensions must be at least 1".into()));
        }
        if self.field_timesteps < 2 {
            return Err(Error::Spec("at least two field timesteps are required".into()));
        }
        if self.point_timesteps == 0 && (self.background.trajectories > 0 || self.blobs.iter().any(|b| b.trajectories > 0)) {
            return Err(Error::Spec("trajectories requested with zero point timesteps".into()));
        }
        if let Some(s) = &self.background.stripes {
            if s.axis > 2 || !(s.width > 0.0) {
                return Err(Error::Spec("stripes need axis 0..=2 and a positive width".into()));
            }
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if b.radius.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(Error::Spec(format!("blob {i}: radii must be positive")));
            }
            let [t0, t1] = b.span(&self.extent);
            if !(t0 <= t1 && t0 >= self.extent.t_min && t1 <= self.extent.t_max) {
                return Err(Error::Spec(format!("blob {i}: time span outside the extent")));
            }
            // motion is linear, so checking both ends of the span covers the path
            for t in [t0, t1] {
                let c = b.center_at(t0, t);
                for axis in 0..3 {
                    if c[axis] - b.radius[axis] < self.extent.min[axis]
                        || c[axis] + b.radius[axis] > self.extent.max[axis]
                    {
                        return Err(Error::Spec(format!("blob {i} leaves the extent along axis {axis}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn even_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![t_min],
        _ => (0..n)
            .map(|j| {
                if j + 1 == n {
                    t_max
                } else {
                    t_min + (t_max - t_min) * j as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Position on `[lo, hi]` of a particle moving freely from `start` and
/// bouncing off both walls.
fn reflect(start: f64, travel: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let period = 2.0 * width;
    let u = (start - lo + travel).rem_euclid(period);
    let folded = if u <= width { u } else { period - u };
    (lo + folded).clamp(lo, hi)
}

fn noise(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.random_range(-amplitude..=amplitude)
    } else {
        0.0
    }
}

/// Builds the dataset described by `spec`; identical specs give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let e = spec.extent.extents();
    let geometry = GridGeometry {
        dims: spec.grid,
        origin: spec.extent.min,
        spacing: [0, 1, 2].map(|a| e[a] / spec.grid[a] as f64),
    };
    // points must stay inside the grid as rebuilt from origin + n * spacing
    let upper = geometry.upper();
    let hi = [0, 1, 2].map(|a| upper[a].min(spec.extent.max[a]));
    let lo = spec.extent.min;
    let field_times = even_times(spec.extent.t_min, spec.extent.t_max, spec.field_timesteps);
    let point_times = even_times(spec.extent.t_min, spec.extent.t_max, spec.point_timesteps);

    let label_at = |loc: &Location| -> u32 {
        spec.blobs
            .iter()
            .enumerate()
            .rev()
            .find(|(_, b)| b.contains(&spec.extent, loc))
            .map_or(BACKGROUND_LABEL, |(i, _)| i as u32 + 1)
    };
    let background_values = |loc: &Location| -> (f64, f64) {
        match &spec.background.stripes {
            Some(s) => {
                let c = [loc.x, loc.y, loc.z][s.axis];
                let band = ((c - lo[s.axis]) / s.width).floor() as i64;
                let parity = band.rem_euclid(2) as usize;
                (s.field_values[parity], s.point_values[parity])
            }
            None => (spec.background.field_value, spec.background.point_value),
        }
    };

    let mut field_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cells = geometry.cell_count();
    let mut field_values = Vec::with_capacity(field_times.len());
    let mut field_truth = Vec::with_capacity(cells * field_times.len());
    for &t in &field_times {
        let mut values = Vec::with_capacity(cells);
        for index in 0..cells {
            let [x, y, z] = geometry.cell_center(geometry.cell_of_linear(index));
            let loc = Location::new(x, y, z, t);
            let label = label_at(&loc);
            let base = match label {
                BACKGROUND_LABEL => background_values(&loc).0,
                b => spec.blobs[b as usize - 1].field_value,
            };
            values.push(base + noise(&mut field_rng, spec.noise.field));
            field_truth.push(label);
        }
        field_values.push(values);
    }

    let mut point_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    point_rng.set_stream(1);
    let mut points = Vec::new();
    let mut point_truth = Vec::new();
    let mut next_id = 0u64;

    for (b, blob) in spec.blobs.iter().enumerate() {
        let [t0, t1] = blob.span(&spec.extent);
        let spread: Vec<Normal<f64>> = blob
            .radius
            .iter()
            .map(|r| Normal::new(0.0, r / 2.0).expect("positive radius"))
            .collect();
        for _ in 0..blob.trajectories {
            let mut offset = [0.0; 3];
            for _ in 0..100 {
                let trial = [0, 1, 2].map(|a| spread[a].sample(&mut point_rng));
                if blob.norm(trial) <= 0.9 {
                    offset = trial;
                    break;
                }
            }
            let id = next_id;
            next_id += 1;
            for &t in point_times.iter().filter(|&&t| t >= t0 && t <= t1) {
                let c = blob.center_at(t0, t);
                points.push(PointSample {
                    trajectory_id: id,
                    t,
                    x: (c[0] + offset[0]).clamp(lo[0], hi[0]),
                    y: (c[1] + offset[1]).clamp(lo[1], hi[1]),
                    z: (c[2] + offset[2]).clamp(lo[2], hi[2]),
                    value: blob.point_value + noise(&mut point_rng, spec.noise.point),
                });
                point_truth.push(b as u32 + 1);
            }
        }
    }

    let bg = &spec.background;
    for _ in 0..bg.trajectories {
        let start = [0, 1, 2].map(|a| point_rng.random_range(lo[a]..=hi[a]));
        let velocity = [0, 1, 2].map(|_| {
            if bg.speed > 0.0 {
                point_rng.random_range(-bg.speed..=bg.speed)
            } else {
                0.0
            }
        });
        let id = next_id;
        next_id += 1;
        for &t in &point_times {
            let travel = t - spec.extent.t_min;
            let p = [0, 1, 2].map(|a| reflect(start[a], velocity[a] * travel, lo[a], hi[a]));
            let loc = Location::new(p[0], p[1], p[2], t);
            // background trajectories are not allowed to pass through blobs
            if label_at(&loc) != BACKGROUND_LABEL {
                continue;
            }
            points.push(PointSample {
                trajectory_id: id,
                t,
                x: p[0],
                y: p[1],
                z: p[2],
                value: background_values(&loc).1 + noise(&mut point_rng, spec.noise.point),
            });
            point_truth.push(BACKGROUND_LABEL);
        }
    }

    let field = FieldGrid {
        geometry,
        data_files: (0..field_times.len()).map(data_file_name).collect(),
        times: field_times,
        variable: "field".into(),
        dtype: Dtype::F64,
        values: field_values,
    };
    Ok(SyntheticDataset {
        field,
        points,
        field_truth,
        point_truth,
    })
}

fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a label file written by [`SyntheticDataset::write`].
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offset = 0u64;
    let mut out = Vec::new();
    for line in text.lines() {
        let l = line
            .trim()
            .parse()
            .map_err(|_| Error::ingest(path, offset, format!("bad label `{line}`")))?;
        out.push(l);
        offset += line.len() as u64 + 1;
    }
    Ok(out)
}

impl SyntheticDataset {
    /// Writes the field sidecar and data, the point file and both label files into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_field(&self.field, dir.join(FIELD_META_FILE))?;
        write_points(dir.join(POINTS_FILE), &self.points, "v")?;
        write_labels(&dir.join(FIELD_TRUTH_FILE), &self.field_truth)?;
        write_labels(&dir.join(POINT_TRUTH_FILE), &self.point_truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            extent: DomainExtent::new([0.0; 3], [10.0, 10.0, 10.0], 0.0, 4.0).unwrap(),
            grid: [10, 10, 5],
            field_timesteps: 3,
            point_timesteps: 5,
            blobs: vec![],
            background: Background {
                field_value: 0.2,
                point_value: 0.1,
                trajectories: 20,
                speed: 1.0,
                stripes: None,
            },
            noise: Noise::default(),
            seed: 42,
        }
    }

    fn blob(center: [f64; 3], fv: f64, pv: f64) -> Blob {
        Blob {
            shape: Shape::Ellipsoid,
            center,
            radius: [2.0, 2.0, 2.0],
            time_span: None,
            velocity: [0.0; 3],
            field_value: fv,
            point_value: pv,
            trajectories: 5,
        }
    }

    #[test]
    fn no_blobs_is_all_background() {
        let mut spec = base_spec();
        spec.noise = Noise { field: 0.01, point: 0.01 };
        let d = generate_synthetic(&spec).unwrap();
        assert!(d.field_truth.iter().all(|&l| l == BACKGROUND_LABEL));
        assert!(d.point_truth.iter().all(|&l| l == BACKGROUND_LABEL));
        assert!(d.field.values.iter().flatten().all(|v| (v - 0.2).abs() <= 0.01));
        assert_eq!(d.points.len(), 20 * 5);
    }

    #[test]
    fn static_blob_without_noise_is_exact() {
        let mut spec = base_spec();
        spec.blobs.push(blob([5.0, 5.0, 5.0], 0.9, 0.7));
        let d = generate_synthetic(&spec).unwrap();
        let flat: Vec<f64> = d.field.values.iter().flatten().copied().collect();
        let mut inside = 0;
        for (v, l) in flat.iter().zip(&d.field_truth) {
            if *l == 1 {
                assert_eq!(*v, 0.9);
                inside += 1;
            } else {
                assert_eq!(*v, 0.2);
            }
        }
        assert!(inside > 0);
        for (p, l) in d.points.iter().zip(&d.point_truth) {
            assert_eq!(p.value, if *l == 1 { 0.7 } else { 0.1 });
        }
    }

    #[test]
    fn two_blobs_give_three_classes() {
        let mut spec = base_spec();
        spec.blobs.push(blob([2.5, 2.5, 5.0], 0.9, 0.7));
        spec.blobs.push(blob([7.5, 7.5, 5.0], 0.5, 0.3));
        let d = generate_synthetic(&spec).unwrap();
        let mut classes: Vec<u32> = d.field_truth.iter().chain(&d.point_truth).copied().collect();
        classes.sort_unstable();
        classes.dedup();
        assert_eq!(classes, vec![0, 1, 2]);
    }

    #[test]
    fn blob_outside_extent_rejected() {
        let mut spec = base_spec();
        spec.blobs.push(blob([9.0, 5.0, 5.0], 1.0, 1.0));
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
        let mut spec = base_spec();
        let mut moving = blob([5.0, 5.0, 5.0], 1.0, 1.0);
        moving.velocity = [2.0, 0.0, 0.0];
        spec.blobs.push(moving);
        assert!(matches!(generate_synthetic(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let mut spec = base_spec();
        spec.noise = Noise { field: 0.05, point: 0.05 };
        spec.blobs.push(blob([5.0, 5.0, 5.0], 0.9, 0.7));
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 7, ..spec.clone() };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn reflection_stays_in_bounds() {
        for travel in [-25.0, -3.0, 0.0, 4.5, 19.0, 1e3] {
            let p = reflect(2.0, travel, 0.0, 10.0);
            assert!((0.0..=10.0).contains(&p), "{travel} -> {p}");
        }
        assert_eq!(reflect(2.0, 9.0, 0.0, 10.0), 9.0);
    }
}
