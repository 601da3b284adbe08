//! On-disk layout of a segmentation output directory.
//!
//! | file | contents |
//! |------|----------|
//! | `segmentation.json` | parameters, normalization, extent, convergence and the center table |
//! | `point_labels.bin` | one little-endian `u32` cluster id per point sample |
//! | `field_labels.bin` | one little-endian `u32` per field sample, timestep-major, x fastest |
//! | `report.json` | per-iteration timings, counts and warnings |
//! | `merge.json` | merge threshold, merge map and merged center table |
//! | `features.json` | center rows with statistics plus per-feature polylines and voxels |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::IterationProgress;
use crate::error::{Error, Result};
use crate::ingest::{DatasetSource, NormalizationRecord};
use crate::model::{ClusterCenter, ClusterId, ClusterParams, DomainExtent, Segmentation};
use crate::postproc::{FeatureExport, MergeResult};

pub const SEGMENTATION_FILE: &str = "segmentation.json";
pub const POINT_LABELS_FILE: &str = "point_labels.bin";
pub const FIELD_LABELS_FILE: &str = "field_labels.bin";
pub const REPORT_FILE: &str = "report.json";
pub const MERGE_FILE: &str = "merge.json";
pub const FEATURES_FILE: &str = "features.json";

/// Contents of `segmentation.json`. Center values are in source units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationDoc {
    pub source: DatasetSource,
    pub extent: DomainExtent,
    pub normalization: NormalizationRecord,
    pub params: ClusterParams,
    pub iterations_used: usize,
    pub converged: bool,
    pub n_point_samples: usize,
    pub n_field_samples: usize,
    pub centers: Vec<ClusterCenter>,
}

/// Contents of `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub params: ClusterParams,
    pub workers: usize,
    pub chunk_size: Option<usize>,
    pub iterations_used: usize,
    pub converged: bool,
    pub iterations: Vec<IterationProgress>,
    pub point_records: usize,
    pub points_dropped: usize,
    pub n_point_samples: usize,
    pub n_field_samples: usize,
    pub n_clusters: usize,
    pub load_seconds: f64,
    pub segment_seconds: f64,
    pub warnings: Vec<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::artifact(path, e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::artifact(path, format!("cannot read: {e}")))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::artifact(path, e.to_string()))
}

pub fn write_labels(path: &Path, labels: &[ClusterId]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().flat_map(|l| l.0.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a label file and checks it holds exactly `expected` labels.
pub fn read_labels(path: &Path, expected: usize) -> Result<Vec<ClusterId>> {
    let bytes = fs::read(path).map_err(|e| Error::artifact(path, format!("cannot read: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::artifact(
            path,
            format!("expected {expected} labels ({} bytes), found {} bytes", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| ClusterId(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect())
}

/// A segmentation output directory.
#[derive(Clone, Debug)]
pub struct ArtifactDir {
    root: PathBuf,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))
    }

    pub fn write_segmentation(&self, doc: &SegmentationDoc, seg: &Segmentation) -> Result<()> {
        self.create()?;
        write_labels(&self.path(POINT_LABELS_FILE), &seg.point_labels)?;
        write_labels(&self.path(FIELD_LABELS_FILE), &seg.field_labels)?;
        write_json(&self.path(SEGMENTATION_FILE), doc)?;
        // a new segmentation invalidates results derived from the old one
        for stale in [MERGE_FILE, FEATURES_FILE] {
            let p = self.path(stale);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
        Ok(())
    }

    /// Loads the segmentation, with the merge map applied when `merge.json` exists.
    pub fn read_segmentation(&self) -> Result<(SegmentationDoc, Segmentation)> {
        let doc: SegmentationDoc = read_json(&self.path(SEGMENTATION_FILE))?;
        let point_labels = read_labels(&self.path(POINT_LABELS_FILE), doc.n_point_samples)?;
        let field_labels = read_labels(&self.path(FIELD_LABELS_FILE), doc.n_field_samples)?;
        let merge = self.read_merge()?;
        let seg = Segmentation {
            point_labels,
            field_labels,
            centers: doc.centers.clone(),
            params: doc.params.clone(),
            iterations_used: doc.iterations_used,
            converged: doc.converged,
            merge_map: merge.map(|m| m.merge_map),
        };
        check_labels(&self.path(SEGMENTATION_FILE), &seg)?;
        Ok((doc, seg))
    }

    pub fn write_report(&self, report: &RunReport) -> Result<()> {
        write_json(&self.path(REPORT_FILE), report)
    }

    pub fn read_report(&self) -> Result<RunReport> {
        read_json(&self.path(REPORT_FILE))
    }

    pub fn write_merge(&self, merge: &MergeResult) -> Result<()> {
        write_json(&self.path(MERGE_FILE), merge)
    }

    pub fn read_merge(&self) -> Result<Option<MergeResult>> {
        let p = self.path(MERGE_FILE);
        if !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    pub fn write_features(&self, export: &FeatureExport) -> Result<()> {
        write_json(&self.path(FEATURES_FILE), export)
    }

    pub fn read_features(&self) -> Result<FeatureExport> {
        read_json(&self.path(FEATURES_FILE))
    }
}

/// Every label must name a center in the table.
fn check_labels(path: &Path, seg: &Segmentation) -> Result<()> {
    let bad = seg
        .point_labels
        .iter()
        .chain(&seg.field_labels)
        .find(|l| seg.center(**l).is_none());
    match bad {
        Some(l) => Err(Error::artifact(path, format!("label {l} has no center"))),
        None => Ok(()),
    }
}
