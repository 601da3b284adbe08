use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the segmentation pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// A clustering parameter or domain extent violates its invariants.
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: &'static str, reason: String },

    /// A field or point file could not be ingested.
    #[error("{path}: {reason} (byte offset {offset})")]
    Ingest {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    /// A derived-variable expression failed to parse or evaluate.
    #[error("expression error: {0}")]
    Expression(String),

    /// A synthetic dataset description is inconsistent.
    #[error("synthetic spec error: {0}")]
    Spec(String),

    /// A center query predicate is malformed or names an unknown property.
    #[error("query error: {0}")]
    Query(String),

    /// A saved segmentation artifact is missing or does not parse.
    #[error("artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Param {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, offset: u64, reason: impl Into<String>) -> Self {
        Error::Ingest {
            path: path.into(),
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn artifact(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Artifact {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
