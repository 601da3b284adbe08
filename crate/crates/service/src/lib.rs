//! HTTP service over one dataset and its segmentation artifacts.
//!
//! | route | purpose |
//! |-------|---------|
//! | `POST /api/segment` | start a segmentation job from a parameter document |
//! | `GET /api/jobs/{id}` | job status and latest iteration progress |
//! | `GET /api/centers?<property>=<min>:<max>&page=` | filtered, paginated center table |
//! | `GET /api/features/{id}?t=&slice=axis:index&window=t1:t2` | polylines, voxel layer and statistics |
//! | `POST /api/merge` | re-merge the latest centers at `{"eps_m": ...}` |
//! | `GET /api/dataset/meta` | extent, grid, timesteps and counts of the dataset |
//!
//! Artifacts are written with the same pipeline as the command line tool, so
//! a finished job leaves the same files as `mfseg segment` with equal parameters.

pub mod error;
pub mod payload;
pub mod routes;
pub mod session;

use std::net::SocketAddr;
use std::sync::Arc;

pub use error::ApiError;
pub use routes::router;
pub use session::{ServiceConfig, Session};

/// Serves `session` on `addr` until the process is stopped.
pub async fn serve(session: Arc<Session>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session)).await
}
