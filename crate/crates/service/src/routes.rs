use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use mfseg::model::{ClusterId, ClusterParams};
use mfseg::pipeline::DatasetMeta;
use mfseg::postproc::CenterQuery;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::payload::{FeaturePayload, FeatureRequest};
use crate::session::{CentersPage, Job, MergeView, Session};

pub const DEFAULT_PAGE_SIZE: usize = 100;
pub const MAX_PAGE_SIZE: usize = 10_000;

type Shared = Arc<Session>;

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/api/segment", post(segment))
        .route("/api/jobs/{id}", get(job))
        .route("/api/centers", get(centers))
        .route("/api/features/{id}", get(feature))
        .route("/api/merge", post(merge))
        .route("/api/dataset/meta", get(meta))
        .with_state(session)
}

fn document<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadDocument(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub job: u64,
}

async fn segment(State(session): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<Submitted>), ApiError> {
    let params: ClusterParams = document(&body)?;
    let id = session.submit_segment(params)?;
    let runner = Arc::clone(&session);
    tokio::task::spawn_blocking(move || runner.run_job(id));
    Ok((StatusCode::ACCEPTED, Json(Submitted { job: id })))
}

async fn job(State(session): State<Shared>, Path(id): Path<u64>) -> Result<Json<Job>, ApiError> {
    session
        .job(id)
        .map(Json)
        .ok_or_else(|| ApiError::NotFound(format!("no job with id {id}")))
}

fn number<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, ApiError> {
    value
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("`{name}` must be a number, got `{value}`")))
}

/// Every pair other than `page` and `page_size` is a `property=min:max` predicate.
async fn centers(
    State(session): State<Shared>,
    Query(pairs): Query<Vec<(String, String)>>,
) -> Result<Json<CentersPage>, ApiError> {
    let mut page = 1;
    let mut page_size = DEFAULT_PAGE_SIZE;
    let mut predicates = Vec::new();
    for (key, value) in &pairs {
        match key.as_str() {
            "page" => page = number(key, value)?,
            "page_size" => page_size = number::<usize>(key, value)?.min(MAX_PAGE_SIZE),
            _ => predicates.push(format!("{key}={value}")),
        }
    }
    let query = CenterQuery::parse(&predicates)?;
    session.centers(&query, page, page_size).map(Json)
}

#[derive(Debug, Default, Deserialize)]
struct FeatureParams {
    t: Option<String>,
    slice: Option<String>,
    window: Option<String>,
}

async fn feature(
    State(session): State<Shared>,
    Path(id): Path<u32>,
    Query(q): Query<FeatureParams>,
) -> Result<Json<FeaturePayload>, ApiError> {
    let req = FeatureRequest {
        t: q.t.as_deref().map(|t| number("t", t)).transpose()?,
        slice: q.slice.as_deref().map(str::parse).transpose()?,
        window: q.window.as_deref().map(str::parse).transpose()?,
    };
    session.feature(ClusterId(id), &req).map(Json)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeRequest {
    pub eps_m: f64,
}

async fn merge(State(session): State<Shared>, body: Bytes) -> Result<Json<MergeView>, ApiError> {
    let req: MergeRequest = document(&body)?;
    session.merge(req.eps_m).map(Json)
}

async fn meta(State(session): State<Shared>) -> Json<DatasetMeta> {
    Json(session.meta().clone())
}
