use crate::engine::accum::SampleKind;
use crate::engine::grid::CenterGrid;
use crate::model::{
    space_time_distance, ClusterCenter, ClusterId, ClusterParams, FieldSample, Location, PointSample,
    Sample,
};

/// `value_weight * |sample - center| + distance_weight * S`, where a missing
/// center value contributes nothing.
#[inline]
fn weighted(
    value_weight: f64,
    center_value: Option<f64>,
    sample_value: f64,
    params: &ClusterParams,
    sample: &Location,
    center: &ClusterCenter,
) -> f64 {
    let value_term = match center_value {
        Some(v) => value_weight * (sample_value - v).abs(),
        None => 0.0,
    };
    value_term + params.weight_distance * space_time_distance(sample, &center.location(), params.time_scale)
}

/// Distance from a point sample to a cluster center.
#[inline]
pub fn point_distance(sample: &PointSample, center: &ClusterCenter, params: &ClusterParams) -> f64 {
    weighted(
        params.weight_point,
        center.point_value,
        sample.value,
        params,
        &sample.location(),
        center,
    )
}

/// Distance from a field sample to a cluster center.
#[inline]
pub fn field_distance(sample: &FieldSample, center: &ClusterCenter, params: &ClusterParams) -> f64 {
    weighted(
        params.weight_field,
        center.field_value,
        sample.value,
        params,
        &sample.location(),
        center,
    )
}

#[inline]
pub(crate) fn kind_distance(
    kind: SampleKind,
    loc: &Location,
    value: f64,
    center: &ClusterCenter,
    params: &ClusterParams,
) -> f64 {
    match kind {
        SampleKind::Point => weighted(params.weight_point, center.point_value, value, params, loc, center),
        SampleKind::Field => weighted(params.weight_field, center.field_value, value, params, loc, center),
    }
}

/// Label for one sample: the metric minimizer among centers inside the
/// sample's window, doubling the window until it holds at least one center.
#[inline]
pub fn assign_sample<S: Sample>(
    sample: &S,
    kind: SampleKind,
    centers: &[ClusterCenter],
    grid: &CenterGrid,
    params: &ClusterParams,
) -> ClusterId {
    let loc = sample.location();
    let key = loc.to_array();
    let value = sample.value();
    let mut half = grid.interval();
    loop {
        let mut best = (f64::INFINITY, u32::MAX);
        grid.for_each_in_window(&key, half, |id| {
            let d = kind_distance(kind, &loc, value, &centers[id as usize], params);
            if d < best.0 || (d == best.0 && id < best.1) {
                best = (d, id);
            }
        });
        if best.1 != u32::MAX {
            return ClusterId(best.1);
        }
        half = half.map(|h| h * 2.0);
    }
}
