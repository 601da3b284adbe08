//! Single-dataset session: the loaded dataset, the latest completed
//! segmentation and the job table.
//!
//! Reads take a consistent snapshot behind an `RwLock` and never wait for a
//! running segmentation. Artifact writes are serialized by a separate lock so
//! a merge cannot interleave with a segmentation replacing the labels.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};
use std::time::Instant;

use mfseg::artifacts::{ArtifactDir, SegmentationDoc, SEGMENTATION_FILE};
use mfseg::engine::{ExecutionConfig, IterationProgress};
use mfseg::ingest::{Dataset, DatasetSource};
use mfseg::model::{ClusterId, ClusterParams, PointSample, Segmentation};
use mfseg::pipeline::{
    canonical_source, dataset_meta, features_for, segment_in_memory, source_samples, DatasetMeta, SegmentRequest,
};
use mfseg::postproc::{merge_clusters, CenterQuery, CenterRow, FeatureExport, MergeResult};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::payload::{feature_payload, validate_request, FeaturePayload, FeatureRequest};

/// What the service serves and where it keeps artifacts.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub source: DatasetSource,
    pub out: PathBuf,
    pub exec: ExecutionConfig,
    /// Normalization of the dataset loaded at startup.
    pub normalize: bool,
}

/// A completed segmentation with its current merge view.
#[derive(Debug)]
pub struct Snapshot {
    pub doc: SegmentationDoc,
    pub segmentation: Segmentation,
    pub merge: Option<MergeResult>,
    pub export: FeatureExport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub iterations_used: usize,
    pub converged: bool,
    pub n_clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub kind: String,
    pub status: JobStatus,
    pub params: ClusterParams,
    pub progress: Option<IterationProgress>,
    pub outcome: Option<JobOutcome>,
    pub error: Option<String>,
}

#[derive(Default)]
struct JobTable {
    next_id: u64,
    jobs: BTreeMap<u64, Job>,
    active: Option<u64>,
}

/// One page of the filtered center table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentersPage {
    pub page: usize,
    pub page_size: usize,
    /// Matching rows over all pages.
    pub total: usize,
    pub merge_eps: Option<f64>,
    pub rows: Vec<CenterRow>,
}

/// Response of a merge request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeView {
    pub merge_eps: f64,
    pub n_features: usize,
    pub merge_map: mfseg::model::MergeMap,
    pub centers: Vec<CenterRow>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

pub struct Session {
    source: DatasetSource,
    dataset: Arc<Dataset>,
    points: Vec<PointSample>,
    load_seconds: f64,
    meta: DatasetMeta,
    out: ArtifactDir,
    exec: ExecutionConfig,
    latest: RwLock<Option<Arc<Snapshot>>>,
    jobs: Mutex<JobTable>,
    disk: Mutex<()>,
}

impl Session {
    /// Loads the dataset and picks up a previous segmentation of it from
    /// `config.out`, if there is one.
    pub fn open(config: ServiceConfig) -> mfseg::Result<Self> {
        let source = canonical_source(&config.source)?;
        let started = Instant::now();
        let dataset = Dataset::load(&source, config.normalize)?;
        let load_seconds = started.elapsed().as_secs_f64();
        let meta = dataset_meta(&dataset, &source);
        let (points, _) = source_samples(&dataset);
        let session = Self {
            source,
            dataset: Arc::new(dataset),
            points,
            load_seconds,
            meta,
            out: ArtifactDir::new(config.out),
            exec: config.exec,
            latest: RwLock::new(None),
            jobs: Mutex::new(JobTable::default()),
            disk: Mutex::new(()),
        };
        if session.out.path(SEGMENTATION_FILE).exists() {
            match session.load_existing() {
                Ok(snapshot) => session.publish(snapshot),
                Err(e) => log::warn!("ignoring existing artifacts in {}: {e}", session.out.root().display()),
            }
        }
        Ok(session)
    }

    fn load_existing(&self) -> mfseg::Result<Snapshot> {
        let (doc, seg) = self.out.read_segmentation()?;
        if doc.source != self.source {
            return Err(mfseg::Error::Artifact {
                path: self.out.path(SEGMENTATION_FILE),
                reason: "segmentation belongs to a different dataset".into(),
            });
        }
        let merge = self.out.read_merge()?;
        self.snapshot(doc, seg, merge)
    }

    fn snapshot(&self, doc: SegmentationDoc, mut seg: Segmentation, merge: Option<MergeResult>) -> mfseg::Result<Snapshot> {
        seg.merge_map = merge.as_ref().map(|m| m.merge_map.clone());
        let export = features_for(&self.dataset, &seg, merge.as_ref())?;
        Ok(Snapshot {
            doc,
            segmentation: seg,
            merge,
            export,
        })
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.latest.write().unwrap_or_else(PoisonError::into_inner) = Some(Arc::new(snapshot));
    }

    pub fn latest(&self) -> Option<Arc<Snapshot>> {
        self.latest.read().unwrap_or_else(PoisonError::into_inner).clone()
    }

    fn require_latest(&self) -> Result<Arc<Snapshot>, ApiError> {
        self.latest().ok_or(ApiError::NoneAvailable)
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn artifacts(&self) -> &ArtifactDir {
        &self.out
    }

    pub fn job(&self, id: u64) -> Option<Job> {
        lock(&self.jobs).jobs.get(&id).cloned()
    }

    /// Registers a queued segmentation job. The caller runs it with
    /// [`Session::run_job`], normally on a blocking thread.
    pub fn submit_segment(&self, params: ClusterParams) -> Result<u64, ApiError> {
        params.validate()?;
        let mut table = lock(&self.jobs);
        if let Some(running_job) = table.active {
            return Err(ApiError::Conflict { running_job });
        }
        table.next_id += 1;
        let id = table.next_id;
        table.jobs.insert(
            id,
            Job {
                id,
                kind: "segment".into(),
                status: JobStatus::Queued,
                params,
                progress: None,
                outcome: None,
                error: None,
            },
        );
        table.active = Some(id);
        Ok(id)
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut Job)) {
        if let Some(job) = lock(&self.jobs).jobs.get_mut(&id) {
            f(job);
        }
    }

    /// Runs a submitted job to completion and publishes its result.
    pub fn run_job(&self, id: u64) {
        // marks the job failed and frees the slot even if the run panics
        struct Finish<'a>(&'a Session, u64);
        impl Drop for Finish<'_> {
            fn drop(&mut self) {
                let mut table = lock(&self.0.jobs);
                if let Some(job) = table.jobs.get_mut(&self.1) {
                    if matches!(job.status, JobStatus::Queued | JobStatus::Running) {
                        job.status = JobStatus::Failed;
                        job.error.get_or_insert_with(|| "job aborted".into());
                    }
                }
                if table.active == Some(self.1) {
                    table.active = None;
                }
            }
        }
        let _finish = Finish(self, id);

        let Some(params) = self.job(id).map(|j| j.params) else { return };
        self.update_job(id, |j| j.status = JobStatus::Running);
        match self.segment(id, params) {
            Ok(outcome) => self.update_job(id, |j| {
                j.status = JobStatus::Done;
                j.outcome = Some(outcome);
            }),
            Err(e) => {
                log::error!("segmentation job {id} failed: {e}");
                self.update_job(id, |j| {
                    j.status = JobStatus::Failed;
                    j.error = Some(e.to_string());
                })
            }
        }
    }

    fn segment(&self, id: u64, params: ClusterParams) -> mfseg::Result<JobOutcome> {
        let (dataset, load_seconds) = if params.normalize == self.dataset.normalization.enabled {
            (Arc::clone(&self.dataset), self.load_seconds)
        } else {
            let started = Instant::now();
            let d = Dataset::load(&self.source, params.normalize)?;
            (Arc::new(d), started.elapsed().as_secs_f64())
        };
        let request = SegmentRequest {
            source: self.source.clone(),
            params,
            exec: self.exec,
        };
        let mut progress = |p: &IterationProgress| self.update_job(id, |j| j.progress = Some(p.clone()));
        let output = segment_in_memory(&dataset, &self.source, &request, load_seconds, &mut progress)?;

        let _disk = lock(&self.disk);
        output.write(&self.out)?;
        let outcome = JobOutcome {
            iterations_used: output.doc.iterations_used,
            converged: output.doc.converged,
            n_clusters: output.doc.centers.len(),
        };
        let snapshot = self.snapshot(output.doc, output.segmentation, None)?;
        self.publish(snapshot);
        Ok(outcome)
    }

    /// Recomputes the merge over the latest centers, writes `merge.json`
    /// and makes it the view for later requests.
    pub fn merge(&self, eps: f64) -> Result<MergeView, ApiError> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(ApiError::Validation {
                field: "eps_m".into(),
                message: "must be a non-negative finite number".into(),
            });
        }
        let _disk = lock(&self.disk);
        let current = self.require_latest()?;
        let merge = merge_clusters(&current.doc.centers, eps);
        self.out.write_merge(&merge)?;
        let snapshot = self.snapshot(current.doc.clone(), current.segmentation.clone(), Some(merge.clone()))?;
        let view = MergeView {
            merge_eps: eps,
            n_features: merge.feature_count(),
            merge_map: merge.merge_map,
            centers: snapshot.export.centers.clone(),
        };
        self.publish(snapshot);
        Ok(view)
    }

    /// Page `page` (from 1) of the rows matching `query`, by ascending id.
    pub fn centers(&self, query: &CenterQuery, page: usize, page_size: usize) -> Result<CentersPage, ApiError> {
        if page == 0 || page_size == 0 {
            return Err(ApiError::BadRequest("page and page_size start at 1".into()));
        }
        let current = self.require_latest()?;
        // the table is sorted by id, so filtering keeps the order of query_centers
        let matching: Vec<&CenterRow> = current.export.centers.iter().filter(|r| query.matches(r)).collect();
        let start = (page - 1).saturating_mul(page_size);
        let rows = matching.iter().skip(start).take(page_size).map(|r| (*r).clone()).collect();
        Ok(CentersPage {
            page,
            page_size,
            total: matching.len(),
            merge_eps: current.merge.as_ref().map(|m| m.merge_eps),
            rows,
        })
    }

    pub fn feature(&self, id: ClusterId, req: &FeatureRequest) -> Result<FeaturePayload, ApiError> {
        let current = self.require_latest()?;
        let export = &current.export;
        let feature = export
            .features
            .iter()
            .find(|f| f.id == id)
            .ok_or_else(|| ApiError::NotFound(format!("no feature with id {id}")))?;
        let field = self.dataset.field.as_ref();
        validate_request(req, field)?;
        let center = export.centers.iter().find(|r| r.center.id == id);
        Ok(feature_payload(feature, center, &self.points, field, req))
    }
}
