use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mfseg::artifacts::{ArtifactDir, FIELD_LABELS_FILE, MERGE_FILE, POINT_LABELS_FILE, SEGMENTATION_FILE};
use mfseg::engine::ExecutionConfig;
use mfseg::ingest::synth::{Background, Blob, Noise, Shape, SyntheticSpec, FIELD_META_FILE, POINTS_FILE};
use mfseg::ingest::{generate_synthetic, DatasetSource};
use mfseg::model::{ClusterParams, DomainExtent};
use mfseg::pipeline::{run_segment, SegmentRequest};
use mfseg_service::{router, ServiceConfig, Session};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

/// Near-uniform background plus one blob whose points stand out.
fn fixture_spec(grid: [usize; 3]) -> SyntheticSpec {
    SyntheticSpec {
        extent: DomainExtent::new([0.0; 3], [30.0, 30.0, 10.0], 0.0, 4.0).unwrap(),
        grid,
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
        background: Background {
            field_value: 0.5,
            point_value: 0.5,
            trajectories: 400,
            speed: 2.0,
            stripes: None,
        },
        noise: Noise { field: 0.005, point: 0.005 },
        seed: 11,
    }
}

struct Fixture {
    dir: TempDir,
    session: Arc<Session>,
    app: Router,
}

impl Fixture {
    fn new(grid: [usize; 3]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        generate_synthetic(&fixture_spec(grid)).unwrap().write(dir.path().join("data")).unwrap();
        let session = Arc::new(open(dir.path()));
        let app = router(Arc::clone(&session));
        Fixture { dir, session, app }
    }

    fn out(&self) -> ArtifactDir {
        ArtifactDir::new(self.dir.path().join("out"))
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, bytes) = self.call_raw(method, uri, body).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, value)
    }

    async fn call_raw(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
        let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body)
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    /// Polls a job until it finishes and returns the statuses seen in order.
    async fn wait(&self, id: u64) -> (Vec<String>, Value) {
        let mut seen: Vec<String> = Vec::new();
        for _ in 0..6000 {
            let (status, job) = self.call("GET", &format!("/api/jobs/{id}"), None).await;
            assert_eq!(status, StatusCode::OK);
            let s = job["status"].as_str().unwrap().to_string();
            if seen.last() != Some(&s) {
                seen.push(s.clone());
            }
            if s == "done" || s == "failed" {
                return (seen, job);
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("job {id} did not finish");
    }

    async fn segment(&self, params: Value) -> Value {
        let (status, body) = self.call("POST", "/api/segment", Some(params)).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");
        let (_, job) = self.wait(body["job"].as_u64().unwrap()).await;
        assert_eq!(job["status"], "done", "{job}");
        job
    }
}

fn source(root: &Path) -> DatasetSource {
    DatasetSource {
        field: Some(root.join("data").join(FIELD_META_FILE)),
        points: Some(root.join("data").join(POINTS_FILE)),
        derive: None,
    }
}

fn open(root: &Path) -> Session {
    Session::open(ServiceConfig {
        source: source(root),
        out: root.join("out"),
        exec: ExecutionConfig::default(),
        normalize: true,
    })
    .unwrap()
}

fn params() -> Value {
    json!({"k": [4, 4, 2, 1]})
}

fn ids(rows: &Value) -> Vec<u64> {
    rows.as_array().unwrap().iter().map(|r| r["id"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn dataset_meta() {
    let fx = Fixture::new([30, 30, 5]);
    let (status, meta) = fx.call("GET", "/api/dataset/meta", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(meta["n_field_samples"], 30 * 30 * 5 * 3);
    let data = generate_synthetic(&fixture_spec([30, 30, 5])).unwrap();
    let mut trajectories: Vec<u64> = data.points.iter().map(|p| p.trajectory_id).collect();
    trajectories.sort_unstable();
    trajectories.dedup();
    assert_eq!(meta["trajectories"], trajectories.len());
    assert_eq!(meta["n_point_samples"], data.points.len());
    assert_eq!(meta["point_timesteps"], 5);
    assert_eq!(meta["field_times"].as_array().unwrap().len(), 3);
    assert_eq!(meta["grid"]["dims"], json!([30, 30, 5]));
}

#[tokio::test]
async fn nothing_available_before_a_run() {
    let fx = Fixture::new([30, 30, 5]);
    for (method, uri, body) in [
        ("GET", "/api/centers", None),
        ("GET", "/api/features/0", None),
        ("POST", "/api/merge", Some(json!({"eps_m": 0.01}))),
    ] {
        let (status, body) = fx.call(method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(body["error"], "none_available");
    }
    let (status, _) = fx.call("GET", "/api/jobs/1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn invalid_parameters_are_named() {
    let fx = Fixture::new([30, 30, 5]);
    let (status, body) = fx.call("POST", "/api/segment", Some(json!({"eps_c": 0.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation");
    assert_eq!(body["field"], "eps_c");

    let (status, body) = fx.call("POST", "/api/segment", Some(json!({"k": [0, 1, 1, 1]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "k");

    let (status, body) = fx.call("POST", "/api/segment", Some(json!({"w_d": 1.0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("w_d"), "{body}");

    // nothing was queued
    let (status, _) = fx.call("GET", "/api/jobs/1", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn job_runs_to_done_and_matches_direct_pipeline() {
    let fx = Fixture::new([30, 30, 5]);
    let (status, body) = fx.call("POST", "/api/segment", Some(params())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (seen, job) = fx.wait(body["job"].as_u64().unwrap()).await;

    let order = ["queued", "running", "done"];
    let positions: Vec<usize> = seen.iter().map(|s| order.iter().position(|o| o == s).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{seen:?}");
    assert_eq!(seen.last().unwrap(), "done");
    assert!(job["progress"]["iteration"].as_u64().unwrap() >= 1);
    assert!(job["progress"]["max_center_delta"].is_number());
    assert_eq!(job["outcome"]["iterations_used"], job["progress"]["iteration"]);

    // same parameters through the pipeline directly give identical artifacts
    let direct = ArtifactDir::new(fx.dir.path().join("direct"));
    let request = SegmentRequest {
        source: source(fx.dir.path()),
        params: serde_json::from_value::<ClusterParams>(params()).unwrap(),
        exec: ExecutionConfig::default(),
    };
    run_segment(&request, &direct, &mut |_| {}).unwrap();
    for f in [SEGMENTATION_FILE, POINT_LABELS_FILE, FIELD_LABELS_FILE] {
        assert_eq!(
            std::fs::read(fx.out().path(f)).unwrap(),
            std::fs::read(direct.path(f)).unwrap(),
            "{f}"
        );
    }
}

#[tokio::test]
async fn second_submit_while_running_conflicts() {
    let fx = Fixture::new([90, 90, 30]);
    let (status, first) = fx.call("POST", "/api/segment", Some(params())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = first["job"].as_u64().unwrap();
    let (status, body) = fx.call("POST", "/api/segment", Some(params())).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["running_job"], id);

    // reads never wait for the running job
    let (status, _) = fx.call("GET", "/api/dataset/meta", None).await;
    assert_eq!(status, StatusCode::OK);

    let (_, job) = fx.wait(id).await;
    assert_eq!(job["status"], "done");
    let (status, _) = fx.call("POST", "/api/segment", Some(params())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[tokio::test]
async fn centers_filter_and_paginate() {
    let fx = Fixture::new([30, 30, 5]);
    fx.segment(params()).await;

    let (status, all) = fx.call("GET", "/api/centers?page_size=10000", None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = all["rows"].as_array().unwrap().clone();
    assert_eq!(all["total"].as_u64().unwrap() as usize, rows.len());
    let all_ids = ids(&all["rows"]);
    assert!(all_ids.windows(2).all(|w| w[0] < w[1]));
    assert!(rows.iter().all(|r| r.get("p_std").is_some() && r.get("bbox_min").is_some()));

    // independent filter over the full table
    let (lo, hi) = (0.4, 0.6);
    let expected: Vec<u64> = rows
        .iter()
        .filter(|r| r["p_c"].as_f64().is_some_and(|p| lo <= p && p <= hi))
        .filter(|r| r["n_fields"].as_u64().unwrap() >= 1)
        .map(|r| r["id"].as_u64().unwrap())
        .collect();
    let uri = format!("/api/centers?p_c={lo}:{hi}&n_fields=1:1e18&page_size=10000");
    let (_, page) = fx.call("GET", &uri, None).await;
    assert_eq!(ids(&page["rows"]), expected);
    assert!(!expected.is_empty() && expected.len() < rows.len());

    // pages concatenate to the whole table
    let mut paged = Vec::new();
    for page in 1.. {
        let (status, body) = fx.call("GET", &format!("/api/centers?page={page}&page_size=3"), None).await;
        assert_eq!(status, StatusCode::OK);
        let chunk = ids(&body["rows"]);
        if chunk.is_empty() {
            break;
        }
        paged.extend(chunk);
    }
    assert_eq!(paged, all_ids);

    let (status, body) = fx.call("GET", "/api/centers?page=999", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body["rows"].as_array().unwrap().is_empty());

    let (status, body) = fx.call("GET", "/api/centers?q_c=0:1", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = fx.call("GET", "/api/centers?page=0", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn feature_payloads() {
    let fx = Fixture::new([30, 30, 5]);
    fx.segment(params()).await;
    let snapshot = fx.session.latest().unwrap();
    let feature = snapshot
        .export
        .features
        .iter()
        .max_by_key(|f| f.polylines.len())
        .unwrap()
        .clone();
    let id = feature.id.0;

    let (status, full) = fx.call("GET", &format!("/api/features/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(full["polylines"].as_array().unwrap().len(), feature.polylines.len());
    let first: Vec<u64> = full["polylines"][0]["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["sample"].as_u64().unwrap())
        .collect();
    assert_eq!(first, feature.polylines[0].samples.iter().map(|&s| s as u64).collect::<Vec<_>>());
    assert_eq!(full["stats"]["n_points"], feature.stats.n_points);
    assert!(full["layer"].is_null());

    let (_, clipped) = fx.call("GET", &format!("/api/features/{id}?window=1:2"), None).await;
    let vertices: Vec<f64> = clipped["polylines"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|l| l["vertices"].as_array().unwrap().iter().map(|v| v["t"].as_f64().unwrap()))
        .collect();
    assert!(!vertices.is_empty());
    assert!(vertices.iter().all(|t| (1.0..=2.0).contains(t)));

    let (&step, cells) = feature.voxels.iter().next().unwrap();
    let (_, layer) = fx.call("GET", &format!("/api/features/{id}?t={step}"), None).await;
    assert_eq!(layer["layer"]["voxels"].as_array().unwrap().len(), cells.len());
    let (_, sliced) = fx.call("GET", &format!("/api/features/{id}?t={step}&slice=z:0"), None).await;
    let voxels = sliced["layer"]["voxels"].as_array().unwrap();
    assert!(voxels.iter().all(|v| v["cell"][2] == 0));
    assert!(voxels.len() <= cells.len());

    // a timestep where this feature has no voxels gives an empty layer
    if let Some(empty) = (0..3u32).find(|t| !feature.voxels.contains_key(t)) {
        let (status, body) = fx.call("GET", &format!("/api/features/{id}?t={empty}"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert!(body["layer"]["voxels"].as_array().unwrap().is_empty());
    }

    for uri in [
        format!("/api/features/{id}?t=3"),
        format!("/api/features/{id}?t=0&slice=z:5"),
        format!("/api/features/{id}?slice=x:1"),
        format!("/api/features/{id}?window=2:1"),
    ] {
        let (status, _) = fx.call("GET", &uri, None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
    }
    let (status, _) = fx.call("GET", "/api/features/99999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn merge_updates_the_view() {
    let fx = Fixture::new([30, 30, 5]);
    fx.segment(params()).await;
    let (_, before) = fx.call("GET", "/api/centers?page_size=10000", None).await;

    let (status, zero) = fx.call("POST", "/api/merge", Some(json!({"eps_m": 0.0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(zero["centers"], before["rows"]);

    let (_, merged) = fx.call_raw("POST", "/api/merge", Some(json!({"eps_m": 0.01}))).await;
    let (_, again) = fx.call_raw("POST", "/api/merge", Some(json!({"eps_m": 0.01}))).await;
    assert_eq!(merged, again);
    assert!(fx.out().path(MERGE_FILE).exists());

    let merged: Value = serde_json::from_slice(&merged).unwrap();
    let n_features = merged["n_features"].as_u64().unwrap() as usize;
    let n_before = before["rows"].as_array().unwrap().len();
    assert!(n_features < n_before / 4, "{n_features} of {n_before}");

    // the largest feature absorbs every pure-background cluster
    let largest = merged["centers"]
        .as_array()
        .unwrap()
        .iter()
        .max_by_key(|r| r["members"].as_array().unwrap().len())
        .unwrap();
    assert!(largest["members"].as_array().unwrap().len() >= 20);

    let (_, after) = fx.call("GET", "/api/centers?page_size=10000", None).await;
    assert_eq!(after["rows"], merged["centers"]);
    assert_eq!(after["merge_eps"], 0.01);

    let (status, body) = fx.call("POST", "/api/merge", Some(json!({"eps_m": -1.0}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "eps_m");
}

#[tokio::test]
async fn restart_picks_up_saved_artifacts() {
    let fx = Fixture::new([30, 30, 5]);
    fx.segment(params()).await;
    fx.call("POST", "/api/merge", Some(json!({"eps_m": 0.01}))).await;
    let (_, before) = fx.call_raw("GET", "/api/centers", None).await;

    let reopened = Fixture {
        app: router(Arc::new(open(fx.dir.path()))),
        session: Arc::clone(&fx.session),
        dir: fx.dir,
    };
    let (status, after) = reopened.call_raw("GET", "/api/centers", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
}
