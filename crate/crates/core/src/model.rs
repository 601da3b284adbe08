//! Domain types shared by ingest, the clustering engine and post-processing.
//!
//! Everything here is a plain value type. Coordinates and sample values are
//! always `f64`; time is kept in its native unit and only converted to a
//! length (through the conversion factor) when a space-time distance is taken.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in space and time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64, z: f64, t: f64) -> Self {
        Self { x, y, z, t }
    }

    /// Components in axis order `x, y, z, t`.
    #[inline]
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.t]
    }

    #[inline]
    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// 4D Euclidean separation with time converted to length by `time_scale`.
#[inline]
pub fn space_time_distance(a: &Location, b: &Location, time_scale: f64) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    let dt = time_scale * (a.t - b.t);
    (dx * dx + dy * dy + dz * dz + dt * dt).sqrt()
}

/// Axis-aligned bounds of the dataset in space and time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainExtent {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub t_min: f64,
    pub t_max: f64,
}

impl DomainExtent {
    pub fn new(min: [f64; 3], max: [f64; 3], t_min: f64, t_max: f64) -> Result<Self> {
        let extent = Self {
            min,
            max,
            t_min,
            t_max,
        };
        extent.validate()?;
        Ok(extent)
    }

    pub fn validate(&self) -> Result<()> {
        let lo = self.lower();
        let hi = self.upper();
        for axis in 0..4 {
            if !(lo[axis].is_finite() && hi[axis].is_finite()) {
                return Err(Error::param("extent", format!("axis {axis} bound is not finite")));
            }
            if hi[axis] <= lo[axis] {
                return Err(Error::param(
                    "extent",
                    format!("axis {axis}: max {} must exceed min {}", hi[axis], lo[axis]),
                ));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn lower(&self) -> [f64; 4] {
        [self.min[0], self.min[1], self.min[2], self.t_min]
    }

    #[inline]
    pub fn upper(&self) -> [f64; 4] {
        [self.max[0], self.max[1], self.max[2], self.t_max]
    }

    /// Side lengths, the last one in time units.
    pub fn extents(&self) -> [f64; 4] {
        let lo = self.lower();
        let hi = self.upper();
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], hi[3] - lo[3]]
    }

    /// Closed containment test on all four axes.
    pub fn contains(&self, loc: &Location) -> bool {
        let lo = self.lower();
        let hi = self.upper();
        loc.to_array()
            .iter()
            .enumerate()
            .all(|(axis, v)| *v >= lo[axis] && *v <= hi[axis])
    }
}

/// Spacing between neighbouring seeds along each axis (time units on the last one).
pub fn interval_distances(extent: &DomainExtent, k: [usize; 4]) -> Result<[f64; 4]> {
    validate_counts(k)?;
    let e = extent.extents();
    Ok([
        e[0] / k[0] as f64,
        e[1] / k[1] as f64,
        e[2] / k[2] as f64,
        e[3] / k[3] as f64,
    ])
}

pub(crate) fn validate_counts(k: [usize; 4]) -> Result<()> {
    if let Some(axis) = k.iter().position(|&n| n == 0) {
        return Err(Error::param("k", format!("count along axis {axis} must be at least 1")));
    }
    if k.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n)).is_none_or(|n| n > u32::MAX as usize) {
        return Err(Error::param("k", "total cluster count overflows"));
    }
    Ok(())
}

/// Anything the engine can cluster: a 4D location plus one scalar.
pub trait Sample: Sync {
    fn location(&self) -> Location;
    fn value(&self) -> f64;
}

/// One point of one trajectory at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSample {
    pub trajectory_id: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub value: f64,
}

impl Sample for PointSample {
    #[inline]
    fn location(&self) -> Location {
        Location::new(self.x, self.y, self.z, self.t)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }
}

/// One grid cell at one field timestep. The position is the cell center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub cell: [u32; 3],
    pub timestep: u32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub t: f64,
    pub value: f64,
}

impl Sample for FieldSample {
    #[inline]
    fn location(&self) -> Location {
        Location::new(self.x, self.y, self.z, self.t)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }
}

/// Dense cluster identifier, assigned in seeding order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

impl ClusterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Six-value cluster summary plus member counts.
///
/// `point_value` is `None` exactly when the cluster holds no point samples,
/// and likewise `field_value` for field samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterCenter {
    pub id: ClusterId,
    #[serde(rename = "x_c")]
    pub x: f64,
    #[serde(rename = "y_c")]
    pub y: f64,
    #[serde(rename = "z_c")]
    pub z: f64,
    #[serde(rename = "t_c")]
    pub t: f64,
    #[serde(rename = "p_c")]
    pub point_value: Option<f64>,
    #[serde(rename = "f_c")]
    pub field_value: Option<f64>,
    pub n_points: u64,
    pub n_fields: u64,
    /// Set when the cluster lost all members in the last update.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dormant: bool,
}

impl ClusterCenter {
    /// A seed: a location with no values and no members.
    pub fn seed(id: ClusterId, location: Location) -> Self {
        Self {
            id,
            x: location.x,
            y: location.y,
            z: location.z,
            t: location.t,
            point_value: None,
            field_value: None,
            n_points: 0,
            n_fields: 0,
            dormant: false,
        }
    }

    #[inline]
    pub fn location(&self) -> Location {
        Location::new(self.x, self.y, self.z, self.t)
    }

    pub fn members(&self) -> u64 {
        self.n_points + self.n_fields
    }
}

/// User-facing clustering parameters. Missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    /// Seed counts along x, y, z, t.
    pub k: [usize; 4],
    /// Length units per time unit.
    #[serde(rename = "cf")]
    pub time_scale: f64,
    #[serde(rename = "wd")]
    pub weight_distance: f64,
    #[serde(rename = "wp")]
    pub weight_point: f64,
    #[serde(rename = "wf")]
    pub weight_field: f64,
    /// Largest relative change of any center value still counted as converged.
    #[serde(rename = "eps_c")]
    pub convergence_eps: f64,
    /// Largest symmetric percent difference of both center values for a merge.
    #[serde(rename = "eps_m")]
    pub merge_eps: f64,
    #[serde(rename = "max_iters")]
    pub max_iterations: usize,
    pub normalize: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            k: [2, 2, 2, 2],
            time_scale: 1.0,
            weight_distance: 1.0,
            weight_point: 1.0,
            weight_field: 1.0,
            convergence_eps: 0.01,
            merge_eps: 0.0,
            max_iterations: 50,
            normalize: true,
        }
    }
}

impl ClusterParams {
    pub fn total_clusters(&self) -> usize {
        self.k.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        validate_counts(self.k)?;
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::param("cf", "must be a positive finite number"));
        }
        for (field, w) in [
            ("wd", self.weight_distance),
            ("wp", self.weight_point),
            ("wf", self.weight_field),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::param(field, "must be a non-negative finite number"));
            }
        }
        if self.weight_distance + self.weight_point <= 0.0 {
            return Err(Error::param("wp", "wd + wp must be positive"));
        }
        if self.weight_distance + self.weight_field <= 0.0 {
            return Err(Error::param("wf", "wd + wf must be positive"));
        }
        if !(self.convergence_eps.is_finite() && self.convergence_eps > 0.0) {
            return Err(Error::param("eps_c", "must be a positive finite number"));
        }
        if !(self.merge_eps.is_finite() && self.merge_eps >= 0.0) {
            return Err(Error::param("eps_m", "must be a non-negative finite number"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Mapping from original cluster ids to the representative of their merge group.
///
/// Ids missing from the map resolve to themselves.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MergeMap(pub BTreeMap<ClusterId, ClusterId>);

impl MergeMap {
    pub fn identity<I: IntoIterator<Item = ClusterId>>(ids: I) -> Self {
        Self(ids.into_iter().map(|id| (id, id)).collect())
    }

    #[inline]
    pub fn resolve(&self, id: ClusterId) -> ClusterId {
        self.0.get(&id).copied().unwrap_or(id)
    }

    /// True when every target maps to itself.
    pub fn is_idempotent(&self) -> bool {
        self.0.values().all(|&to| self.resolve(to) == to)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|(from, to)| from == to)
    }
}

/// Result of one clustering run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    pub point_labels: Vec<ClusterId>,
    /// Timestep-major, x-fastest within a timestep.
    pub field_labels: Vec<ClusterId>,
    /// Non-empty clusters, sorted by id.
    pub centers: Vec<ClusterCenter>,
    pub params: ClusterParams,
    pub iterations_used: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_map: Option<MergeMap>,
}

impl Segmentation {
    pub fn center(&self, id: ClusterId) -> Option<&ClusterCenter> {
        self.centers
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.centers[i])
    }

    /// Feature id of a cluster after applying the merge map, if any.
    pub fn feature_of(&self, id: ClusterId) -> ClusterId {
        self.merge_map.as_ref().map_or(id, |m| m.resolve(id))
    }
}
