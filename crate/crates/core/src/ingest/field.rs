//! Structured field grids: a TOML metadata sidecar plus one raw little-endian
//! array per timestep, x varying fastest.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DomainExtent, FieldSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    XFastest,
}

/// Contents of the metadata sidecar, field names as they appear on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMeta {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub times: Vec<f64>,
    pub variable: String,
    pub data_files: Vec<String>,
    pub dtype: Dtype,
    pub order: Order,
}

/// Regular grid layout shared by every timestep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl GridGeometry {
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    #[inline]
    pub fn linear_index(&self, cell: [u32; 3]) -> usize {
        let [nx, ny, _] = self.dims;
        (cell[2] as usize * ny + cell[1] as usize) * nx + cell[0] as usize
    }

    #[inline]
    pub fn cell_of_linear(&self, index: usize) -> [u32; 3] {
        let [nx, ny, _] = self.dims;
        [
            (index % nx) as u32,
            ((index / nx) % ny) as u32,
            (index / (nx * ny)) as u32,
        ]
    }

    /// Lower face of cell `i` along `axis`.
    #[inline]
    pub fn face(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    pub fn cell_center(&self, cell: [u32; 3]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (axis, v) in c.iter_mut().enumerate() {
            *v = self.origin[axis] + (cell[axis] as f64 + 0.5) * self.spacing[axis];
        }
        c
    }

    pub fn upper(&self) -> [f64; 3] {
        [
            self.face(0, self.dims[0]),
            self.face(1, self.dims[1]),
            self.face(2, self.dims[2]),
        ]
    }

    /// Index of the half-open cell `[face(i), face(i+1))` holding `v`; the
    /// upper boundary of the grid belongs to the last cell.
    pub fn locate_axis(&self, axis: usize, v: f64) -> Option<u32> {
        let n = self.dims[axis];
        if !(v >= self.face(axis, 0) && v <= self.face(axis, n)) {
            return None;
        }
        let guess = ((v - self.origin[axis]) / self.spacing[axis]).floor();
        let mut i = (guess.max(0.0) as usize).min(n - 1);
        // the division can be off by one ulp; settle against the face positions
        while i > 0 && v < self.face(axis, i) {
            i -= 1;
        }
        while i + 1 < n && v >= self.face(axis, i + 1) {
            i += 1;
        }
        Some(i as u32)
    }

    pub fn locate(&self, x: f64, y: f64, z: f64) -> Option<[u32; 3]> {
        Some([
            self.locate_axis(0, x)?,
            self.locate_axis(1, y)?,
            self.locate_axis(2, z)?,
        ])
    }
}

/// A loaded time-varying scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub geometry: GridGeometry,
    pub times: Vec<f64>,
    pub variable: String,
    pub dtype: Dtype,
    pub data_files: Vec<String>,
    /// One array of `cell_count()` values per timestep.
    pub values: Vec<Vec<f64>>,
}

impl FieldGrid {
    pub fn meta(&self) -> FieldMeta {
        FieldMeta {
            dims: self.geometry.dims,
            origin: self.geometry.origin,
            spacing: self.geometry.spacing,
            times: self.times.clone(),
            variable: self.variable.clone(),
            data_files: self.data_files.clone(),
            dtype: self.dtype,
            order: Order::XFastest,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.geometry.cell_count() * self.times.len()
    }

    /// Spatial bounds of the grid and the closed span of its timesteps.
    pub fn extent(&self) -> Result<DomainExtent> {
        DomainExtent::new(
            self.geometry.origin,
            self.geometry.upper(),
            self.times[0],
            *self.times.last().expect("validated non-empty"),
        )
    }

    /// Every (cell, timestep) as a sample, timestep-major then x-fastest.
    pub fn samples(&self) -> Vec<FieldSample> {
        let cells = self.geometry.cell_count();
        let mut out = Vec::with_capacity(self.sample_count());
        for (step, (t, values)) in self.times.iter().zip(&self.values).enumerate() {
            for (index, &value) in values.iter().enumerate().take(cells) {
                let cell = self.geometry.cell_of_linear(index);
                let [x, y, z] = self.geometry.cell_center(cell);
                out.push(FieldSample {
                    cell,
                    timestep: step as u32,
                    x,
                    y,
                    z,
                    t: *t,
                    value,
                });
            }
        }
        out
    }
}

fn meta_error(path: &Path, text: &str, key: &str, reason: impl Into<String>) -> Error {
    let offset = text.find(key).unwrap_or(0) as u64;
    Error::ingest(path, offset, reason)
}

fn validate_meta(path: &Path, text: &str, meta: &FieldMeta) -> Result<()> {
    if meta.dims.contains(&0) {
        return Err(meta_error(path, text, "dims", "every grid dimension must be at least 1"));
    }
    if meta
        .spacing
        .iter()
        .any(|s| !(s.is_finite() && *s > 0.0))
    {
        return Err(meta_error(path, text, "spacing", "spacing must be positive and finite"));
    }
    if meta.origin.iter().any(|o| !o.is_finite()) {
        return Err(meta_error(path, text, "origin", "origin must be finite"));
    }
    if meta.times.is_empty() {
        return Err(meta_error(path, text, "times", "at least one timestep is required"));
    }
    if meta.times.iter().any(|t| !t.is_finite()) || meta.times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(meta_error(path, text, "times", "timestep times must strictly increase"));
    }
    if meta.data_files.len() != meta.times.len() {
        return Err(meta_error(
            path,
            text,
            "data_files",
            format!(
                "{} data files listed for {} timesteps",
                meta.data_files.len(),
                meta.times.len()
            ),
        ));
    }
    Ok(())
}

fn read_payload(path: &Path, dtype: Dtype, cells: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = cells * dtype.size();
    if bytes.len() < expected {
        return Err(Error::ingest(
            path,
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::ingest(
            path,
            expected as u64,
            format!("payload has {} trailing bytes", bytes.len() - expected),
        ));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
    };
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::ingest(
            path,
            (i * dtype.size()) as u64,
            "non-finite field value",
        ));
    }
    Ok(values)
}

/// Loads a field grid from its metadata sidecar. Data files are resolved
/// relative to the sidecar's directory and read concurrently.
pub fn load_field(meta_path: impl AsRef<Path>) -> Result<FieldGrid> {
    let meta_path = meta_path.as_ref();
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: FieldMeta = toml::from_str(&text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start) as u64;
        Error::ingest(meta_path, offset, format!("malformed metadata: {}", e.message()))
    })?;
    validate_meta(meta_path, &text, &meta)?;

    let base = meta_path.parent().unwrap_or_else(|| Path::new("."));
    let geometry = GridGeometry {
        dims: meta.dims,
        origin: meta.origin,
        spacing: meta.spacing,
    };
    let cells = geometry.cell_count();
    let values = meta
        .data_files
        .par_iter()
        .map(|name| read_payload(&base.join(name), meta.dtype, cells))
        .collect::<Result<Vec<_>>>()?;

    Ok(FieldGrid {
        geometry,
        times: meta.times,
        variable: meta.variable,
        dtype: meta.dtype,
        data_files: meta.data_files,
        values,
    })
}

/// Writes the sidecar and its data files; data file names are taken from the
/// grid and placed next to `meta_path`.
pub fn write_field(grid: &FieldGrid, meta_path: impl AsRef<Path>) -> Result<()> {
    let meta_path = meta_path.as_ref();
    let base: PathBuf = meta_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let text = toml::to_string(&grid.meta())
        .map_err(|e| Error::artifact(meta_path, e.to_string()))?;
    fs::write(meta_path, text).map_err(|e| Error::io(meta_path, e))?;

    for (name, values) in grid.data_files.iter().zip(&grid.values) {
        let path = base.join(name);
        let mut bytes = Vec::with_capacity(values.len() * grid.dtype.size());
        match grid.dtype {
            Dtype::F32 => values
                .iter()
                .for_each(|v| bytes.extend_from_slice(&(*v as f32).to_le_bytes())),
            Dtype::F64 => values
                .iter()
                .for_each(|v| bytes.extend_from_slice(&v.to_le_bytes())),
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Conventional data file name for timestep `step`.
pub fn data_file_name(step: usize) -> String {
    format!("field_t{step:04}.raw")
}
