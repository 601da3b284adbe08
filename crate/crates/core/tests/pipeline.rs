mod common;

use std::fs;
use std::path::Path;

use mfseg::artifacts::{
    ArtifactDir, FEATURES_FILE, FIELD_LABELS_FILE, MERGE_FILE, POINT_LABELS_FILE, SEGMENTATION_FILE,
};
use mfseg::engine::ExecutionConfig;
use mfseg::ingest::synth::{FIELD_META_FILE, POINTS_FILE};
use mfseg::ingest::{load_field, load_points, DatasetSource};
use mfseg::model::ClusterParams;
use mfseg::pipeline::{run_features, run_merge, run_segment, SegmentRequest};
use mfseg::Error;

use common::{ids, rand_index, slab_spec, uniform_background_spec};

fn request(dir: &Path, params: ClusterParams, exec: ExecutionConfig) -> SegmentRequest {
    SegmentRequest {
        source: DatasetSource {
            field: Some(dir.join(FIELD_META_FILE)),
            points: Some(dir.join(POINTS_FILE)),
            derive: None,
        },
        params,
        exec,
    }
}

fn slab_params(n_blobs: usize) -> ClusterParams {
    ClusterParams {
        k: [n_blobs + 1, 1, 1, 1],
        merge_eps: 1.0,
        ..ClusterParams::default()
    }
}

#[test]
fn segment_merge_features_on_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mfseg::ingest::generate_synthetic(&slab_spec(2, 5)).unwrap();
    data.write(tmp.path().join("data")).unwrap();
    let out = ArtifactDir::new(tmp.path().join("out"));

    let mut seen = 0;
    let (doc, report) = run_segment(
        &request(&tmp.path().join("data"), slab_params(2), ExecutionConfig::default()),
        &out,
        &mut |_| seen += 1,
    )
    .unwrap();
    assert!(doc.converged);
    assert_eq!(report.iterations.len(), seen);
    assert_eq!(doc.n_point_samples, data.points.len());
    for f in [SEGMENTATION_FILE, POINT_LABELS_FILE, FIELD_LABELS_FILE] {
        assert!(out.path(f).exists(), "{f}");
    }

    let (_, seg) = out.read_segmentation().unwrap();
    let labels: Vec<u32> = ids(&seg.point_labels).into_iter().chain(ids(&seg.field_labels)).collect();
    let truth: Vec<u32> = data.point_truth.iter().chain(&data.field_truth).copied().collect();
    assert!(rand_index(&labels, &truth) >= 0.99);

    let merge = run_merge(&out, 1.0).unwrap();
    assert!(out.path(MERGE_FILE).exists());
    let export = run_features(&out).unwrap();
    assert_eq!(export.features.len(), merge.feature_count());
    assert_eq!(read(&out, FEATURES_FILE), {
        run_features(&out).unwrap();
        read(&out, FEATURES_FILE)
    });

    // re-segmenting drops results derived from the previous labels
    run_segment(
        &request(&tmp.path().join("data"), slab_params(2), ExecutionConfig::default()),
        &out,
        &mut |_| {},
    )
    .unwrap();
    assert!(!out.path(MERGE_FILE).exists());
    assert!(!out.path(FEATURES_FILE).exists());
}

fn read(out: &ArtifactDir, file: &str) -> Vec<u8> {
    fs::read(out.path(file)).unwrap()
}

#[test]
fn artifacts_identical_across_execution_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mfseg::ingest::generate_synthetic(&uniform_background_spec(3)).unwrap();
    data.write(tmp.path().join("data")).unwrap();
    let params = ClusterParams { k: [4, 4, 2, 1], ..ClusterParams::default() };
    let configs = [
        ExecutionConfig { workers: 1, chunk_size: None },
        ExecutionConfig { workers: 3, chunk_size: Some(777) },
        ExecutionConfig { workers: 1, chunk_size: None },
    ];
    let outputs: Vec<ArtifactDir> = configs
        .iter()
        .enumerate()
        .map(|(i, &exec)| {
            let out = ArtifactDir::new(tmp.path().join(format!("out{i}")));
            run_segment(&request(&tmp.path().join("data"), params.clone(), exec), &out, &mut |_| {}).unwrap();
            out
        })
        .collect();
    for f in [SEGMENTATION_FILE, POINT_LABELS_FILE, FIELD_LABELS_FILE] {
        for out in &outputs[1..] {
            assert_eq!(read(&outputs[0], f), read(out, f), "{f}");
        }
    }
}

#[test]
fn parameter_error_before_loading() {
    let tmp = tempfile::tempdir().unwrap();
    let params = ClusterParams {
        weight_distance: 0.0,
        weight_point: 0.0,
        ..ClusterParams::default()
    };
    // the inputs do not exist, so an ingest error would mean validation ran late
    let out = ArtifactDir::new(tmp.path().join("out"));
    let err = run_segment(&request(tmp.path(), params, ExecutionConfig::default()), &out, &mut |_| {}).unwrap_err();
    assert!(matches!(err, Error::Param { .. }), "{err}");
    assert!(!out.root().exists());
}

#[test]
fn missing_inputs_name_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ArtifactDir::new(tmp.path().join("out"));
    let err = run_segment(
        &request(tmp.path(), ClusterParams::default(), ExecutionConfig::default()),
        &out,
        &mut |_| {},
    )
    .unwrap_err();
    assert!(err.to_string().contains(FIELD_META_FILE), "{err}");
}

#[test]
fn malformed_point_file_reports_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("p.csv");
    let (header, good) = ("id,t,x,y,z,v\n", "0,0,1,1,1,0.5\n");
    fs::write(&p, format!("{header}{good}1,zero,1,1,1,0.5\n")).unwrap();
    match load_points(&p, None).unwrap_err() {
        Error::Ingest { offset, reason, .. } => {
            assert_eq!(offset as usize, header.len() + good.len(), "{reason}");
            assert!(reason.contains('t'), "{reason}");
        }
        other => panic!("{other}"),
    }

    fs::write(&p, "id,t,x,y\n").unwrap();
    assert!(load_points(&p, None).unwrap_err().to_string().contains("`z`"));
}

#[test]
fn truncated_field_payload_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = mfseg::ingest::generate_synthetic(&slab_spec(2, 1)).unwrap();
    data.write(tmp.path()).unwrap();
    let meta = tmp.path().join(FIELD_META_FILE);
    assert!(load_field(&meta).is_ok());

    let first = &data.field.data_files[0];
    let payload = tmp.path().join(first);
    let bytes = fs::read(&payload).unwrap();
    fs::write(&payload, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_field(&meta).unwrap_err();
    assert!(matches!(err, Error::Ingest { .. }), "{err}");
    assert!(err.to_string().contains(first.as_str()), "{err}");
}

#[test]
fn merge_requires_a_segmentation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ArtifactDir::new(tmp.path());
    assert!(matches!(run_merge(&out, 0.1), Err(Error::Artifact { .. })));
    assert!(matches!(run_merge(&out, -1.0), Err(Error::Param { field: "eps_m", .. })));
}
