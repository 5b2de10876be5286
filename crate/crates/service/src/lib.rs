//! HTTP service over explanation sessions.
//!
//! Endpoints: `GET /health`, `POST /sessions`, `GET /sessions`,
//! `DELETE /sessions/{id}`, `GET /sessions/{id}/schema`,
//! `GET /sessions/{id}/tree`, `POST /sessions/{id}/explain[?fresh=true]`
//! and `POST /sessions/{id}/whatif`. Errors are
//! `{"error": {"code", "message"}}` with a 4xx/5xx status.

mod app;
mod error;
mod session;

pub use app::{router, serve, serve_on, AppState, ServiceConfig};
pub use error::{Error, Result};
pub use session::{load_training, LiveSession, RawSplit, SessionSpec, Snapshot, TreeView};
