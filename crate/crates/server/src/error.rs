use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};

use tagatar_core::{EvalError, MatchError, SessionError};

/// Machine-readable error codes. The set is closed: clients can match on it
/// exhaustively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedRequest,
    Unauthorized,
    NotFound,
    MethodNotAllowed,
    Conflict,
    SessionClosed,
    InvalidReference,
    ValidationFailed,
    StorageError,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::MalformedRequest,
        ErrorCode::Unauthorized,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::Conflict,
        ErrorCode::SessionClosed,
        ErrorCode::InvalidReference,
        ErrorCode::ValidationFailed,
        ErrorCode::StorageError,
    ];

    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::MalformedRequest => StatusCode::BAD_REQUEST,
            ErrorCode::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ErrorCode::Conflict | ErrorCode::SessionClosed => StatusCode::CONFLICT,
            ErrorCode::InvalidReference | ErrorCode::ValidationFailed => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ErrorCode::StorageError => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{status_code} {machine_code:?}: {message}")]
pub struct ApiError {
    pub status_code: u16,
    pub machine_code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status_code: code.status().as_u16(),
            machine_code: code,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.machine_code.status();
        (status, axum::Json(self)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let code = match &err {
            SessionError::NotFound(_) => ErrorCode::NotFound,
            SessionError::Closed(_) => ErrorCode::SessionClosed,
            SessionError::Conflict(_) => ErrorCode::Conflict,
            SessionError::InvalidReference(_) => ErrorCode::InvalidReference,
            SessionError::Validation(_) | SessionError::Csv(_) => ErrorCode::ValidationFailed,
            SessionError::Io(_) | SessionError::Locked(_) | SessionError::Corrupt { .. } => {
                ErrorCode::StorageError
            }
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<MatchError> for ApiError {
    fn from(err: MatchError) -> Self {
        ApiError::new(ErrorCode::ValidationFailed, err.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(err: EvalError) -> Self {
        let code = match err {
            EvalError::Io(_) => ErrorCode::StorageError,
            _ => ErrorCode::ValidationFailed,
        };
        ApiError::new(code, err.to_string())
    }
}

impl From<axum::extract::rejection::JsonRejection> for ApiError {
    fn from(err: axum::extract::rejection::JsonRejection) -> Self {
        ApiError::new(ErrorCode::MalformedRequest, err.body_text())
    }
}
