#![allow(dead_code)]

use mfseg::ingest::synth::{Background, Blob, Noise, Shape, Stripes, SyntheticSpec};
use mfseg::ingest::{generate_synthetic, Dataset, FieldGrid, PointData, SyntheticDataset};
use mfseg::model::{ClusterId, DomainExtent};

fn background(field_value: f64, point_value: f64, trajectories: usize) -> Background {
    Background {
        field_value,
        point_value,
        trajectories,
        speed: 2.0,
        stripes: None,
    }
}

/// Box blobs that fill whole slabs along x, with background in the slab
/// `background_slab`. One slab per class, so `k = (classes, 1, 1, 1)`.
pub fn slab_spec(n_blobs: usize, seed: u64) -> SyntheticSpec {
    let classes = n_blobs + 1;
    let background_slab = classes / 2;
    let field_values = [0.1, 0.9, 0.3, 0.7, 0.2, 0.8];
    let point_values = [0.8, 0.2, 0.6, 0.4, 0.9, 0.1];
    let blobs = (0..classes)
        .filter(|&s| s != background_slab)
        .enumerate()
        .map(|(b, slab)| Blob {
            shape: Shape::Box,
            center: [10.0 * slab as f64 + 5.0, 5.0, 5.0],
            radius: [5.0, 5.0, 5.0],
            time_span: None,
            velocity: [0.0; 3],
            field_value: field_values[b],
            point_value: point_values[b],
            trajectories: 40,
        })
        .collect();
    SyntheticSpec {
        extent: DomainExtent::new([0.0; 3], [10.0 * classes as f64, 10.0, 10.0], 0.0, 4.0).unwrap(),
        grid: [10 * classes, 10, 10],
        field_timesteps: 3,
        point_timesteps: 5,
        blobs,
        background: background(0.5, 0.5, 300),
        noise: Noise::default(),
        seed,
    }
}

/// Static ellipsoidal blobs with noise, each inside one cell of a
/// `(4, 4, 2, t)` seed grid, just over 1e5 samples.
pub fn gaussian_spec(seed: u64) -> SyntheticSpec {
    let blob = |center: [f64; 3], fv: f64, pv: f64| Blob {
        shape: Shape::Ellipsoid,
        center,
        radius: [4.0, 4.0, 4.0],
        time_span: None,
        velocity: [0.0; 3],
        field_value: fv,
        point_value: pv,
        trajectories: 600,
    };
    SyntheticSpec {
        extent: DomainExtent::new([0.0; 3], [40.0, 40.0, 20.0], 0.0, 6.0).unwrap(),
        grid: [32, 32, 16],
        field_timesteps: 4,
        point_timesteps: 11,
        blobs: vec![
            blob([15.0, 15.0, 5.0], 0.9, 0.8),
            blob([35.0, 5.0, 15.0], 0.15, 0.25),
            blob([5.0, 25.0, 15.0], 0.75, 0.1),
        ],
        background: background(0.45, 0.55, 1500),
        noise: Noise { field: 0.05, point: 0.05 },
        seed,
    }
}

/// Alternating stripes along x that do not line up with the seed grid.
pub fn stripes_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        extent: DomainExtent::new([0.0; 3], [20.0, 20.0, 4.0], 0.0, 2.0).unwrap(),
        grid: [40, 40, 4],
        field_timesteps: 2,
        point_timesteps: 5,
        blobs: vec![],
        background: Background {
            stripes: Some(Stripes {
                axis: 0,
                width: 2.5,
                field_values: [0.2, 0.8],
                point_values: [0.3, 0.7],
            }),
            ..background(0.0, 0.0, 200)
        },
        noise: Noise { field: 0.01, point: 0.01 },
        seed,
    }
}

/// Near-uniform background plus one blob whose points differ from the
/// background but whose field does not.
pub fn uniform_background_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        extent: DomainExtent::new([0.0; 3], [30.0, 30.0, 10.0], 0.0, 4.0).unwrap(),
        grid: [30, 30, 5],
        field_timesteps: 3,
        point_timesteps: 5,
        blobs: vec![Blob {
            shape: Shape::Ellipsoid,
            center: [22.0, 22.0, 5.0],
            radius: [4.0, 4.0, 4.0],
            time_span: None,
            velocity: [0.0; 3],
            field_value: 0.5,
            point_value: 0.9,
            trajectories: 150,
        }],
        background: background(0.5, 0.5, 400),
        noise: Noise { field: 0.005, point: 0.005 },
        seed,
    }
}

/// In-memory dataset for a generated fixture, in the same sample order as
/// the truth labels.
pub fn dataset_of(data: &SyntheticDataset, normalize: bool) -> Dataset {
    let field: FieldGrid = data.field.clone();
    let points = PointData {
        samples: data.points.clone(),
        records: (0..data.points.len()).collect(),
        total_records: data.points.len(),
        dropped: 0,
        expression: "value".into(),
    };
    Dataset::from_parts(Some(field), Some(points), normalize).unwrap()
}

pub fn generate(spec: &SyntheticSpec) -> (SyntheticDataset, Dataset) {
    let data = generate_synthetic(spec).unwrap();
    let dataset = dataset_of(&data, true);
    assert_eq!(dataset.point_samples.len(), data.points.len(), "fixture points must lie in the domain");
    (data, dataset)
}

fn pairs(n: u64) -> f64 {
    n as f64 * n.saturating_sub(1) as f64 / 2.0
}

/// Fraction of sample pairs on which two labelings agree about being
/// together or apart, from the contingency table.
pub fn rand_index(a: &[u32], b: &[u32]) -> f64 {
    use std::collections::HashMap;
    assert_eq!(a.len(), b.len());
    let n = a.len() as u64;
    if n < 2 {
        return 1.0;
    }
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut rows: HashMap<u32, u64> = HashMap::new();
    let mut cols: HashMap<u32, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let same_both: f64 = joint.values().map(|&c| pairs(c)).sum();
    let same_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let same_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    (total + 2.0 * same_both - same_a - same_b) / total
}

pub fn ids(labels: &[ClusterId]) -> Vec<u32> {
    labels.iter().map(|l| l.0).collect()
}

#[test]
fn rand_index_oracle() {
    assert_eq!(rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
    // disagreements on pairs (0,2), (1,2) and (2,3): 3 of 6
    assert_eq!(rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]), 0.5);
}
