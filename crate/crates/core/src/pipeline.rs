//! End-to-end steps shared by the command line tool and the HTTP service, so
//! both produce the same artifacts for the same inputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifacts::{ArtifactDir, RunReport, SegmentationDoc};
use crate::engine::{Engine, ExecutionConfig, IterationProgress, ProgressSink};
use crate::error::{Error, Result};
use crate::ingest::{Dataset, DatasetSource, GridGeometry, NormalizationRecord};
use crate::model::{ClusterParams, DomainExtent, FieldSample, PointSample, Segmentation};
use crate::postproc::{export_features, merge_clusters, FeatureExport, MergeResult};

fn canonical(path: &Path) -> Result<PathBuf> {
    path.canonicalize().map_err(|e| Error::io(path, e))
}

/// Absolute input paths, so artifacts do not depend on the working directory.
pub fn canonical_source(source: &DatasetSource) -> Result<DatasetSource> {
    Ok(DatasetSource {
        field: source.field.as_deref().map(canonical).transpose()?,
        points: source.points.as_deref().map(canonical).transpose()?,
        derive: source.derive.clone(),
    })
}

/// Samples with values in source units, in label order.
pub fn source_samples(dataset: &Dataset) -> (Vec<PointSample>, Vec<FieldSample>) {
    let points = dataset.points.as_ref().map(|p| p.samples.clone()).unwrap_or_default();
    let fields = dataset.field.as_ref().map(|f| f.samples()).unwrap_or_default();
    (points, fields)
}

/// A finished clustering run, with centers already mapped back to source units.
#[derive(Clone, Debug)]
pub struct SegmentRun {
    pub segmentation: Segmentation,
    pub iterations: Vec<IterationProgress>,
    pub seconds: f64,
}

/// Clusters a loaded dataset. `on_progress` sees every iteration.
pub fn segment_dataset(
    dataset: &Dataset,
    params: &ClusterParams,
    exec: ExecutionConfig,
    on_progress: &mut dyn FnMut(&IterationProgress),
) -> Result<SegmentRun> {
    let engine = Engine::new(params.clone(), exec)?;
    let mut iterations = Vec::new();
    let started = Instant::now();
    let mut sink = |p: &IterationProgress| {
        iterations.push(p.clone());
        on_progress(p);
    };
    let mut seg = engine.run(
        &dataset.point_samples,
        &dataset.field_samples,
        &dataset.extent,
        &mut sink as &mut dyn ProgressSink,
    )?;
    let norm = &dataset.normalization;
    for c in &mut seg.centers {
        c.point_value = c.point_value.map(|v| norm.point_to_source(v));
        c.field_value = c.field_value.map(|v| norm.field_to_source(v));
    }
    Ok(SegmentRun {
        segmentation: seg,
        iterations,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Inputs of one `segment` invocation.
#[derive(Clone, Debug)]
pub struct SegmentRequest {
    pub source: DatasetSource,
    pub params: ClusterParams,
    pub exec: ExecutionConfig,
}

/// Loads, clusters and writes the segmentation and report to `out`.
pub fn run_segment(
    request: &SegmentRequest,
    out: &ArtifactDir,
    on_progress: &mut dyn FnMut(&IterationProgress),
) -> Result<(SegmentationDoc, RunReport)> {
    request.params.validate()?;
    let source = canonical_source(&request.source)?;
    let started = Instant::now();
    let dataset = Dataset::load(&source, request.params.normalize)?;
    let load_seconds = started.elapsed().as_secs_f64();
    segment_loaded(&dataset, &source, request, load_seconds, out, on_progress)
}

/// Artifacts of one clustering run, before they are written.
#[derive(Clone, Debug)]
pub struct SegmentOutput {
    pub doc: SegmentationDoc,
    pub report: RunReport,
    pub segmentation: Segmentation,
}

impl SegmentOutput {
    pub fn write(&self, out: &ArtifactDir) -> Result<()> {
        out.write_segmentation(&self.doc, &self.segmentation)?;
        out.write_report(&self.report)
    }
}

/// Like [`run_segment`] for a dataset already in memory; `source` must be canonical.
pub fn segment_loaded(
    dataset: &Dataset,
    source: &DatasetSource,
    request: &SegmentRequest,
    load_seconds: f64,
    out: &ArtifactDir,
    on_progress: &mut dyn FnMut(&IterationProgress),
) -> Result<(SegmentationDoc, RunReport)> {
    let output = segment_in_memory(dataset, source, request, load_seconds, on_progress)?;
    output.write(out)?;
    Ok((output.doc, output.report))
}

/// Clusters `dataset` and assembles the artifacts without touching the disk.
pub fn segment_in_memory(
    dataset: &Dataset,
    source: &DatasetSource,
    request: &SegmentRequest,
    load_seconds: f64,
    on_progress: &mut dyn FnMut(&IterationProgress),
) -> Result<SegmentOutput> {
    request.params.validate()?;
    let run = segment_dataset(dataset, &request.params, request.exec, on_progress)?;
    let seg = run.segmentation;
    let doc = SegmentationDoc {
        source: source.clone(),
        extent: dataset.extent,
        normalization: dataset.normalization.clone(),
        params: request.params.clone(),
        iterations_used: seg.iterations_used,
        converged: seg.converged,
        n_point_samples: seg.point_labels.len(),
        n_field_samples: seg.field_labels.len(),
        centers: seg.centers.clone(),
    };
    let mut warnings = dataset.normalization.warnings.clone();
    let (records, dropped) = dataset
        .points
        .as_ref()
        .map_or((0, 0), |p| (p.total_records, p.dropped));
    if dropped > 0 {
        warnings.push(format!("{dropped} point samples outside the domain were dropped"));
    }
    if !seg.converged {
        warnings.push(format!(
            "did not converge within {} iterations",
            request.params.max_iterations
        ));
    }
    let report = RunReport {
        params: request.params.clone(),
        workers: request.exec.workers,
        chunk_size: request.exec.chunk_size,
        iterations_used: seg.iterations_used,
        converged: seg.converged,
        iterations: run.iterations,
        point_records: records,
        points_dropped: dropped,
        n_point_samples: doc.n_point_samples,
        n_field_samples: doc.n_field_samples,
        n_clusters: seg.centers.len(),
        load_seconds,
        segment_seconds: run.seconds,
        warnings,
    };
    Ok(SegmentOutput {
        doc,
        report,
        segmentation: seg,
    })
}

/// Recomputes the merge over saved centers and writes `merge.json`.
pub fn run_merge(out: &ArtifactDir, eps: f64) -> Result<MergeResult> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::param("eps_m", "must be a non-negative finite number"));
    }
    let (doc, _) = out.read_segmentation()?;
    let merge = merge_clusters(&doc.centers, eps);
    out.write_merge(&merge)?;
    Ok(merge)
}

/// Reloads the dataset named in the artifacts with the normalization it was run with.
pub fn reload_dataset(doc: &SegmentationDoc) -> Result<Dataset> {
    Dataset::load(&doc.source, doc.params.normalize)
}

/// Builds the feature export for saved artifacts and writes `features.json`.
pub fn run_features(out: &ArtifactDir) -> Result<FeatureExport> {
    let (doc, seg) = out.read_segmentation()?;
    let dataset = reload_dataset(&doc)?;
    let export = features_for(&dataset, &seg, out.read_merge()?.as_ref())?;
    out.write_features(&export)?;
    Ok(export)
}

/// Feature export for a segmentation of `dataset`.
pub fn features_for(dataset: &Dataset, seg: &Segmentation, merge: Option<&MergeResult>) -> Result<FeatureExport> {
    let (points, fields) = source_samples(dataset);
    if points.len() != seg.point_labels.len() || fields.len() != seg.field_labels.len() {
        return Err(Error::Artifact {
            path: PathBuf::from(crate::artifacts::SEGMENTATION_FILE),
            reason: format!(
                "labels cover {} points and {} field samples but the dataset has {} and {}",
                seg.point_labels.len(),
                seg.field_labels.len(),
                points.len(),
                fields.len()
            ),
        });
    }
    Ok(export_features(seg, merge, &points, &fields))
}

/// Summary of a loaded dataset for clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: DatasetSource,
    pub extent: DomainExtent,
    pub grid: Option<GridGeometry>,
    pub field_times: Vec<f64>,
    pub field_variable: Option<String>,
    pub point_expression: Option<String>,
    pub point_timesteps: usize,
    pub trajectories: usize,
    pub n_point_samples: usize,
    pub n_field_samples: usize,
    pub points_dropped: usize,
    pub normalization: NormalizationRecord,
}

pub fn dataset_meta(dataset: &Dataset, source: &DatasetSource) -> DatasetMeta {
    let points = &dataset.point_samples;
    let mut ids: Vec<u64> = points.iter().map(|p| p.trajectory_id).collect();
    ids.sort_unstable();
    ids.dedup();
    DatasetMeta {
        source: source.clone(),
        extent: dataset.extent,
        grid: dataset.field.as_ref().map(|f| f.geometry),
        field_times: dataset.field.as_ref().map(|f| f.times.clone()).unwrap_or_default(),
        field_variable: dataset.field.as_ref().map(|f| f.variable.clone()),
        point_expression: dataset.points.as_ref().map(|p| p.expression.clone()),
        point_timesteps: crate::postproc::features::point_timesteps(points).len(),
        trajectories: ids.len(),
        n_point_samples: points.len(),
        n_field_samples: dataset.field_samples.len(),
        points_dropped: dataset.points.as_ref().map_or(0, |p| p.dropped),
        normalization: dataset.normalization.clone(),
    }
}
