//! Cluster merging, feature assembly, statistics and center-table queries.

pub mod features;
pub mod merge;
pub mod query;
pub mod stats;

use serde::{Deserialize, Serialize};

pub use features::{build_features, Feature, Polyline};
pub use merge::{merge_clusters, MergeResult};
pub use query::{center_table, query_centers, CenterQuery, CenterRow, Predicate, Property};
pub use stats::{feature_stats, FeatureStats, ValueStats};

use crate::model::{FieldSample, MergeMap, PointSample, Segmentation};

/// Everything a consumer needs to browse one segmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExport {
    pub merge_eps: Option<f64>,
    pub merge_map: MergeMap,
    pub centers: Vec<CenterRow>,
    pub features: Vec<Feature>,
}

/// Builds features for `seg` under `merge` (no merging when `None`).
pub fn export_features(
    seg: &Segmentation,
    merge: Option<&MergeResult>,
    points: &[PointSample],
    fields: &[FieldSample],
) -> FeatureExport {
    let mut seg = seg.clone();
    seg.merge_map = merge.map(|m| m.merge_map.clone());
    let features = build_features(&seg, points, fields);
    let centers = match merge {
        Some(m) => center_table(&m.centers, &features),
        None => center_table(&seg.centers, &features),
    };
    FeatureExport {
        merge_eps: merge.map(|m| m.merge_eps),
        merge_map: seg
            .merge_map
            .unwrap_or_else(|| MergeMap::identity(seg.centers.iter().map(|c| c.id))),
        centers,
        features,
    }
}
