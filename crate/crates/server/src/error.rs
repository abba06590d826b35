use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dcad_core::dsl::Diagnostic;
use dcad_core::Error as CoreError;
use serde::Serialize;

use crate::API_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{message}")]
    Unprocessable {
        message: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    v: u32,
    error: String,
    #[serde(skip_serializing_if = "<[Diagnostic]>::is_empty")]
    diagnostics: &'a [Diagnostic],
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Unprocessable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn session(id: &str) -> Self {
        ApiError::NotFound(format!("no session `{id}`"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Edit(_) | CoreError::OptionIndex { .. } | CoreError::Other(_) => {
                ApiError::BadRequest(e.to_string())
            }
            _ => ApiError::Unprocessable {
                diagnostics: e.diagnostics(),
                message: e.to_string(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let diagnostics = match &self {
            ApiError::Unprocessable { diagnostics, .. } => diagnostics.as_slice(),
            _ => &[],
        };
        let body = ErrorBody {
            v: API_VERSION,
            error: self.to_string(),
            diagnostics,
        };
        (self.status(), Json(body)).into_response()
    }
}
