use log::warn;
use serde::{Deserialize, Serialize};

use crate::model::{FieldSample, PointSample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        values.fold(None, |acc, v| match acc {
            None => Some(Self { min: v, max: v }),
            Some(r) => Some(Self {
                min: r.min.min(v),
                max: r.max.max(v),
            }),
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    #[inline]
    fn forward(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

/// How sample values were rescaled, so results can be reported in source units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub enabled: bool,
    pub point: Option<ValueRange>,
    pub field: Option<ValueRange>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl NormalizationRecord {
    pub fn point_to_source(&self, v: f64) -> f64 {
        match (self.enabled, self.point) {
            (true, Some(r)) => r.inverse(v),
            _ => v,
        }
    }

    pub fn field_to_source(&self, v: f64) -> f64 {
        match (self.enabled, self.field) {
            (true, Some(r)) => r.inverse(v),
            _ => v,
        }
    }
}

/// Min-max maps point and field values to `[0, 1]` independently when
/// `enabled`; a constant kind maps to 0 with a warning.
pub fn normalize_variables(
    points: &mut [PointSample],
    fields: &mut [FieldSample],
    enabled: bool,
) -> NormalizationRecord {
    let mut record = NormalizationRecord {
        enabled,
        point: ValueRange::of(points.iter().map(|p| p.value)),
        field: ValueRange::of(fields.iter().map(|f| f.value)),
        warnings: Vec::new(),
    };
    if !enabled {
        return record;
    }
    for (kind, range) in [("point", record.point), ("field", record.field)] {
        if let Some(r) = range.filter(ValueRange::is_degenerate) {
            let msg = format!("{kind} values are constant ({}); normalized to 0", r.min);
            warn!("{msg}");
            record.warnings.push(msg);
        }
    }
    if let Some(r) = record.point {
        points.iter_mut().for_each(|p| p.value = r.forward(p.value));
    }
    if let Some(r) = record.field {
        fields.iter_mut().for_each(|f| f.value = r.forward(f.value));
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(values: &[f64]) -> Vec<FieldSample> {
        values
            .iter()
            .map(|&value| FieldSample { cell: [0; 3], timestep: 0, x: 0.0, y: 0.0, z: 0.0, t: 0.0, value })
            .collect()
    }

    #[test]
    fn min_max() {
        let mut f = fields(&[2.0, 4.0, 6.0]);
        let rec = normalize_variables(&mut [], &mut f, true);
        assert_eq!(f.iter().map(|s| s.value).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert_eq!(rec.field, Some(ValueRange { min: 2.0, max: 6.0 }));
        assert_eq!(rec.point, None);
        assert_eq!(rec.field_to_source(0.5), 4.0);
    }

    #[test]
    fn disabled_is_identity() {
        let mut f = fields(&[2.0, 4.0, 6.0]);
        let rec = normalize_variables(&mut [], &mut f, false);
        assert_eq!(f.iter().map(|s| s.value).collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
        assert_eq!(rec.field_to_source(4.0), 4.0);
    }

    #[test]
    fn constant_field_maps_to_zero_with_warning() {
        let mut f = fields(&[7.0; 5]);
        let rec = normalize_variables(&mut [], &mut f, true);
        assert!(f.iter().all(|s| s.value == 0.0));
        assert_eq!(rec.warnings.len(), 1);
        assert_eq!(rec.field_to_source(0.0), 7.0);
    }
}
