//! Joint segmentation of time-varying point trajectories and field grids into
//! 4D features.
//!
//! The crate follows the processing order: [`ingest`] turns files into
//! samples, [`engine`] clusters them, [`postproc`] merges clusters and builds
//! features, and [`artifacts`] with [`pipeline`] tie the steps to the on-disk
//! outputs shared by the command line tool and the HTTP service.

pub mod artifacts;
pub mod bench;
pub mod engine;
pub mod error;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod postproc;

pub use error::{Error, Result};
