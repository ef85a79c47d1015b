use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};
use triage_core::api::{codes, ErrorBody, ErrorDetail};
use triage_core::corpus::CorpusError;
use triage_core::engine::EngineError;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn validation(field: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, codes::VALIDATION, message)
            .with_details(json!({ "field": field }))
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, codes::NOT_FOUND, what)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, codes::CONFLICT, message)
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        Self::new(StatusCode::PRECONDITION_FAILED, codes::PRECONDITION_FAILED, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, codes::INTERNAL, message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::Config { field, .. } => ApiError::validation(field, message),
            EngineError::CorpusTooSmall { needed, available } => {
                ApiError::validation("test_size", message)
                    .with_details(json!({ "field": "test_size", "needed": needed, "available": available }))
            }
            EngineError::MissingOracle(id) => {
                ApiError::validation("corpus", message).with_details(json!({ "field": "corpus", "report_id": id }))
            }
            EngineError::PendingLabels(ids) => {
                ApiError::precondition(message).with_details(json!({ "pending": ids }))
            }
            EngineError::Finished => ApiError::precondition(message),
            EngineError::NotInQueue(_) => ApiError::conflict(message),
            EngineError::Corpus(CorpusError::TestSizeTooLarge { .. }) => {
                ApiError::validation("test_size", message)
            }
            EngineError::Corpus(CorpusError::UnknownId(_)) => ApiError::not_found(message),
            EngineError::Corpus(
                CorpusError::NotQueried(_)
                | CorpusError::AlreadyLabeled(_)
                | CorpusError::NotLabeled(_)
                | CorpusError::NotUnlabeled(_),
            ) => ApiError::conflict(message),
            e if e.is_retryable() => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, codes::BACKEND_UNAVAILABLE, message)
            }
            EngineError::Model(_) | EngineError::Pseudo(_) | EngineError::Sampling(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, codes::BACKEND_UNAVAILABLE, message)
            }
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
                details: self.details,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
