//! Render-ready views of one feature: polylines clipped to a time window and
//! the voxels of one field timestep, optionally cut by an axis-aligned slice.

use std::fmt;
use std::str::FromStr;

use mfseg::ingest::FieldGrid;
use mfseg::model::{ClusterId, PointSample};
use mfseg::postproc::{CenterRow, Feature, FeatureStats};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// A plane of cells with a fixed index along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    pub axis: usize,
    pub index: u32,
}

impl FromStr for Slice {
    type Err = ApiError;

    /// `axis:index`, the axis as `x`, `y`, `z` or `0`..`2`.
    fn from_str(s: &str) -> Result<Self, ApiError> {
        let bad = || ApiError::BadRequest(format!("slice `{s}` is not axis:index"));
        let (axis, index) = s.split_once(':').ok_or_else(bad)?;
        let axis = match axis.trim() {
            "x" | "0" => 0,
            "y" | "1" => 1,
            "z" | "2" => 2,
            _ => return Err(bad()),
        };
        let index = index.trim().parse().map_err(|_| bad())?;
        Ok(Slice { axis, index })
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", ["x", "y", "z"][self.axis], self.index)
    }
}

/// Closed time interval `t1:t2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t1: f64,
    pub t2: f64,
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        self.t1 <= t && t <= self.t2
    }
}

impl FromStr for Window {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, ApiError> {
        let bad = || ApiError::BadRequest(format!("window `{s}` is not t1:t2 with t1 <= t2"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let t1: f64 = a.trim().parse().map_err(|_| bad())?;
        let t2: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(t1.is_finite() && t2.is_finite() && t1 <= t2) {
            return Err(bad());
        }
        Ok(Window { t1, t2 })
    }
}

/// Parsed query of a feature request.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FeatureRequest {
    /// Field timestep index.
    pub t: Option<u32>,
    pub slice: Option<Slice>,
    pub window: Option<Window>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    /// Index into the point samples, as in `point_labels.bin`.
    pub sample: u32,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolylinePayload {
    pub trajectory_id: u64,
    pub vertices: Vec<Vertex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Voxel {
    pub cell: [u32; 3],
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelLayer {
    pub timestep: u32,
    pub time: f64,
    pub slice: Option<Slice>,
    pub voxels: Vec<Voxel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePayload {
    pub id: ClusterId,
    pub center: Option<CenterRow>,
    pub stats: FeatureStats,
    pub window: Option<Window>,
    pub polylines: Vec<PolylinePayload>,
    pub isolated: Vec<Vertex>,
    pub layer: Option<VoxelLayer>,
}

fn vertex(points: &[PointSample], i: u32) -> Vertex {
    let p = &points[i as usize];
    Vertex {
        sample: i,
        t: p.t,
        x: p.x,
        y: p.y,
        z: p.z,
        value: p.value,
    }
}

/// Checks the request against the grid before any payload is built.
pub fn validate_request(req: &FeatureRequest, field: Option<&FieldGrid>) -> Result<(), ApiError> {
    if req.slice.is_some() && req.t.is_none() {
        return Err(ApiError::BadRequest("a slice needs a timestep `t`".into()));
    }
    let Some(t) = req.t else { return Ok(()) };
    let field = field.ok_or_else(|| ApiError::BadRequest("the dataset has no field grid".into()))?;
    if t as usize >= field.times.len() {
        return Err(ApiError::BadRequest(format!(
            "timestep {t} out of range (the field has {} timesteps)",
            field.times.len()
        )));
    }
    if let Some(s) = req.slice {
        let dim = field.geometry.dims[s.axis];
        if s.index as usize >= dim {
            return Err(ApiError::BadRequest(format!("slice {s} out of range (axis has {dim} cells)")));
        }
    }
    Ok(())
}

/// Builds the payload. `points` are source-unit samples in label order and
/// `req` must already have passed [`validate_request`].
pub fn feature_payload(
    feature: &Feature,
    center: Option<&CenterRow>,
    points: &[PointSample],
    field: Option<&FieldGrid>,
    req: &FeatureRequest,
) -> FeaturePayload {
    let in_window = |i: &u32| req.window.is_none_or(|w| w.contains(points[*i as usize].t));
    let polylines = feature
        .polylines
        .iter()
        .filter_map(|line| {
            let vertices: Vec<Vertex> = line
                .samples
                .iter()
                .filter(|i| in_window(i))
                .map(|&i| vertex(points, i))
                .collect();
            (!vertices.is_empty()).then_some(PolylinePayload {
                trajectory_id: line.trajectory_id,
                vertices,
            })
        })
        .collect();
    let isolated = feature
        .isolated
        .iter()
        .filter(|i| in_window(i))
        .map(|&i| vertex(points, i))
        .collect();

    let layer = req.t.zip(field).map(|(t, grid)| {
        let cells = feature.voxels.get(&t).map(Vec::as_slice).unwrap_or_default();
        let voxels = cells
            .iter()
            .map(|&linear| (grid.geometry.cell_of_linear(linear as usize), linear))
            .filter(|(cell, _)| req.slice.is_none_or(|s| cell[s.axis] == s.index))
            .map(|(cell, linear)| Voxel {
                cell,
                value: grid.values[t as usize][linear as usize],
            })
            .collect();
        VoxelLayer {
            timestep: t,
            time: grid.times[t as usize],
            slice: req.slice,
            voxels,
        }
    });

    FeaturePayload {
        id: feature.id,
        center: center.cloned(),
        stats: feature.stats.clone(),
        window: req.window,
        polylines,
        isolated,
        layer,
    }
}
