use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use mnemo_core::recall::RecallError;
use mnemo_core::store::StoreError;
use mnemo_core::EngineError;
use serde::{Deserialize, Serialize};

/// Error envelope returned on every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub request_id: String,
    /// Provider port that failed, for `ProviderUnavailable`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, request_id: &str) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                request_id: request_id.into(),
                port: None,
            },
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>, request_id: &str) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message, request_id)
    }

    pub fn from_engine(e: EngineError, request_id: &str) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            EngineError::Store(StoreError::EmptyContent) => (StatusCode::BAD_REQUEST, "EmptyContent"),
            EngineError::Store(StoreError::ScopeInvalid(_)) => (StatusCode::BAD_REQUEST, "ScopeInvalid"),
            EngineError::Store(StoreError::BadRange { .. }) => (StatusCode::BAD_REQUEST, "BadRange"),
            EngineError::Store(StoreError::TimestampRegression { .. }) => (StatusCode::CONFLICT, "TimestampRegression"),
            EngineError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure"),
            EngineError::Recall(RecallError::EmptyQuery) => (StatusCode::BAD_REQUEST, "EmptyQuery"),
            EngineError::Recall(RecallError::InvalidConfig(_)) => (StatusCode::BAD_REQUEST, "InvalidConfig"),
            EngineError::Recall(_) => (StatusCode::INTERNAL_SERVER_ERROR, "IndexFailure"),
            EngineError::ProviderUnavailable { .. } => (StatusCode::SERVICE_UNAVAILABLE, "ProviderUnavailable"),
            EngineError::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "ConfigError"),
        };
        let mut err = Self::new(status, code, message, request_id);
        if let EngineError::ProviderUnavailable { port, .. } = e {
            err.body.port = Some(port);
        }
        err
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(code = %self.body.code, request_id = %self.body.request_id, "{}", self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}
