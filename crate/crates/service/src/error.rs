use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error bodies carry a stable `error` code plus a human-readable message.
#[derive(Debug, Clone, PartialEq)]
pub enum ApiError {
    /// A parameter failed validation; `field` names it.
    Validation { field: String, message: String },
    /// The request body is not a valid document.
    BadDocument(String),
    /// A malformed query string or out-of-range request.
    BadRequest(String),
    NotFound(String),
    /// No segmentation has completed yet.
    NoneAvailable,
    /// A segmentation job is already running.
    Conflict { running_job: u64 },
    Internal(String),
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    running_job: Option<u64>,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::BadDocument(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) | ApiError::NoneAvailable => StatusCode::NOT_FOUND,
            ApiError::Conflict { .. } => StatusCode::CONFLICT,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ApiError::Validation { .. } => "validation",
            ApiError::BadDocument(_) => "bad_document",
            ApiError::BadRequest(_) => "bad_request",
            ApiError::NotFound(_) => "not_found",
            ApiError::NoneAvailable => "none_available",
            ApiError::Conflict { .. } => "conflict",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::Validation { field, message } => write!(f, "invalid `{field}`: {message}"),
            ApiError::BadDocument(m) | ApiError::BadRequest(m) | ApiError::NotFound(m) | ApiError::Internal(m) => {
                f.write_str(m)
            }
            ApiError::NoneAvailable => f.write_str("no completed segmentation is available"),
            ApiError::Conflict { running_job } => write!(f, "segmentation job {running_job} is still running"),
        }
    }
}

impl From<mfseg::Error> for ApiError {
    fn from(e: mfseg::Error) -> Self {
        match e {
            mfseg::Error::Param { field, reason } => ApiError::Validation {
                field: field.to_string(),
                message: reason,
            },
            mfseg::Error::Query(m) => ApiError::BadRequest(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.code(),
            message: self.to_string(),
            field: match &self {
                ApiError::Validation { field, .. } => Some(field),
                _ => None,
            },
            running_job: match self {
                ApiError::Conflict { running_job } => Some(running_job),
                _ => None,
            },
        };
        (self.status(), Json(body)).into_response()
    }
}
