use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use psma_core::ModelError;
use psma_io::IoError;
use psma_sampler::SamplerError;

/// Error response: status plus a JSON body `{error, location?}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    /// Offending field, for validation failures.
    pub location: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    location: Option<&'a str>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), location: None }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, err.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<SamplerError> for ApiError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::InvalidConfig(_) | SamplerError::Model(_) => Self::invalid(e.to_string()),
            _ => Self::internal(e),
        }
    }
}

impl From<IoError> for ApiError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Schema { location, message } => {
                Self { status: StatusCode::UNPROCESSABLE_ENTITY, message, location: Some(location) }
            }
            IoError::UnknownPatient(_) => Self::not_found(e.to_string()),
            IoError::Model(m) => m.into(),
            IoError::Sampler(s) => s.into(),
            IoError::Format(_) => Self::invalid(e.to_string()),
            IoError::Io { .. } | IoError::Checksum => Self::internal(e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body { error: &self.message, location: self.location.as_deref() };
        (self.status, Json(body)).into_response()
    }
}
