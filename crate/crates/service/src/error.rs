use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lmte_core::Error),
    #[error("no session `{0}`")]
    SessionNotFound(String),
    #[error("malformed request body: {0}")]
    BadBody(String),
    #[error("session `{0}` has no test point; POST /sessions/{0}/explain with a point first")]
    NoPoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker failed: {0}")]
    Worker(String),
}

impl Error {
    pub fn status(&self) -> StatusCode {
        use lmte_core::Error as C;
        match self {
            Error::SessionNotFound(_) => StatusCode::NOT_FOUND,
            Error::BadBody(_) => StatusCode::BAD_REQUEST,
            Error::NoPoint(_) => StatusCode::CONFLICT,
            Error::Core(C::Oracle(_)) => StatusCode::BAD_GATEWAY,
            Error::Core(C::Io(_) | C::CorruptModel(_) | C::NonFiniteLoss { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io(_) | Error::Json(_) | Error::Worker(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use lmte_core::Error as C;
        match self {
            Error::SessionNotFound(_) => "session_not_found",
            Error::BadBody(_) => "bad_request",
            Error::NoPoint(_) => "no_point",
            Error::Core(C::Oracle(_)) => "oracle_error",
            Error::Core(C::MissingFile(_)) => "missing_file",
            Error::Core(C::Config(_)) => "bad_config",
            Error::Core(C::NonFiniteLoss { .. }) => "training_diverged",
            Error::Core(C::Io(_) | C::CorruptModel(_)) => "internal",
            Error::Core(_) => "invalid_input",
            Error::Io(_) | Error::Json(_) | Error::Worker(_) => "internal",
        }
    }
}

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code(), "message": self.to_string() } });
        (self.status(), Json(body)).into_response()
    }
}
