use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use graphal_core::Error;

/// An error returned to clients as `{"code": ..., "message": ...}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.status.as_u16(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidParameter(_) => Self::bad_request("invalid_parameter", message),
            Error::ResourceLimit { .. } => Self::new(StatusCode::PAYLOAD_TOO_LARGE, "resource_limit", message),
            Error::ComponentWithoutLabel { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "component_without_label", message)
            }
            Error::Unsupported(_) => Self::bad_request("unsupported", message),
            Error::InvalidQuery { .. } => Self::conflict("invalid_query", message),
            Error::EmptyPool => Self::conflict("completed", message),
            Error::Format { .. } | Error::Csv(_) => Self::bad_request("malformed_data", message),
            Error::Json(_) => Self::bad_request("invalid_json", message),
            Error::Trial { source, .. } => (*source).into(),
            Error::Convergence { .. } | Error::NotPositiveDefinite(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "solver_failed", message)
            }
            Error::Io(_) | Error::Internal(_) => Self::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            code: self.code,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
