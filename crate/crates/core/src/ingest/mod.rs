//! Loading field grids and point trajectories into engine-ready samples.

pub mod expr;
pub mod field;
pub mod link;
pub mod normalize;
pub mod points;
pub mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use field::{load_field, write_field, FieldGrid, GridGeometry};
pub use link::{BucketKey, LinkIndex};
pub use normalize::{normalize_variables, NormalizationRecord};
pub use points::{load_points, write_points, PointData};
pub use synth::{generate_synthetic, SyntheticDataset, SyntheticSpec};

use crate::error::{Error, Result};
use crate::model::{DomainExtent, FieldSample, PointSample};

/// Where a dataset comes from and how its point variable is derived.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub field: Option<PathBuf>,
    pub points: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derive: Option<String>,
}

/// Both sample kinds, normalized and restricted to the domain.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub extent: DomainExtent,
    pub field: Option<FieldGrid>,
    pub points: Option<PointData>,
    pub point_samples: Vec<PointSample>,
    pub field_samples: Vec<FieldSample>,
    pub normalization: NormalizationRecord,
}

fn point_bounds(samples: &[PointSample]) -> Result<DomainExtent> {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for p in samples {
        for (axis, v) in [p.x, p.y, p.z, p.t].into_iter().enumerate() {
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
        }
    }
    // a flat axis (e.g. planar trajectories) gets a unit-wide slab around it
    for axis in 0..4 {
        if hi[axis] <= lo[axis] {
            lo[axis] -= 0.5;
            hi[axis] += 0.5;
        }
    }
    DomainExtent::new([lo[0], lo[1], lo[2]], [hi[0], hi[1], hi[2]], lo[3], hi[3])
}

impl Dataset {
    pub fn load(source: &DatasetSource, normalize: bool) -> Result<Self> {
        if source.field.is_none() && source.points.is_none() {
            return Err(Error::param("input", "at least one of a field or a point file is required"));
        }
        let field = source.field.as_ref().map(load_field).transpose()?;
        let points = source
            .points
            .as_ref()
            .map(|p| load_points(p, source.derive.as_deref()))
            .transpose()?;
        Self::from_parts(field, points, normalize)
    }

    /// The domain is the field grid when there is one, otherwise the bounding
    /// box of the points. Points outside the domain are dropped.
    pub fn from_parts(field: Option<FieldGrid>, mut points: Option<PointData>, normalize: bool) -> Result<Self> {
        let extent = match (&field, &points) {
            (Some(f), _) => f.extent()?,
            (None, Some(p)) => point_bounds(&p.samples)?,
            (None, None) => return Err(Error::param("input", "dataset has no samples")),
        };
        if let Some(p) = points.as_mut() {
            let dropped = p.retain_in_domain(&extent);
            if dropped > 0 {
                log::warn!("dropped {dropped} point samples outside the domain");
            }
        }
        let mut point_samples = points.as_ref().map(|p| p.samples.clone()).unwrap_or_default();
        let mut field_samples = field.as_ref().map(FieldGrid::samples).unwrap_or_default();
        if point_samples.is_empty() && field_samples.is_empty() {
            return Err(Error::param("input", "dataset has no in-domain samples"));
        }
        let normalization = normalize_variables(&mut point_samples, &mut field_samples, normalize);
        Ok(Self {
            extent,
            field,
            points,
            point_samples,
            field_samples,
            normalization,
        })
    }

    /// Point-to-cell links, when the dataset has a field grid.
    pub fn link_index(&self) -> Option<LinkIndex> {
        self.field
            .as_ref()
            .map(|f| LinkIndex::build(&f.geometry, &f.times, &self.point_samples))
    }
}
