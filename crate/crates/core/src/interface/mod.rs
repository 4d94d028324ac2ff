//! Command-line and HTTP front ends over file-backed sessions.

pub mod cli;
pub mod http;
mod store;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionBackend};
use crate::sampling::SamplingError;
use crate::session::{SessionConfig, SessionError};

pub use store::{
    CreateSessionRequest, DataSource, HistoryView, IterateView, PromptView, SessionStore,
    SessionSummary, Snapshot, SubmissionBody,
};

/// Environment variable naming the service's session directory.
pub const ENV_DATA_DIR: &str = "APE_DATA_DIR";

/// Builds the completion backend for a session. Tests substitute stubs here.
pub type BackendFactory =
    Arc<dyn Fn(&SessionConfig) -> Result<Box<dyn CompletionBackend>, BackendError> + Send + Sync>;

/// Uses the backend the session config selects.
pub fn configured_backend() -> BackendFactory {
    Arc::new(|config: &SessionConfig| config.backend.build())
}

/// Always hands out the same shared backend.
pub fn shared_backend<B: CompletionBackend + 'static>(backend: Arc<B>) -> BackendFactory {
    Arc::new(move |_: &SessionConfig| Ok(Box::new(backend.clone()) as Box<dyn CompletionBackend>))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    State,
    Transport,
    NotFound,
    Config,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::Validation => 400,
            ErrorCode::State => 409,
            ErrorCode::NotFound => 404,
            ErrorCode::Transport => 502,
            ErrorCode::Config => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Validation, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl From<BackendError> for ApiError {
    fn from(err: BackendError) -> Self {
        match err {
            BackendError::Config(_) => ApiError::new(ErrorCode::Config, err.to_string()),
            BackendError::InvalidRequest(_) => ApiError::validation(err.to_string()),
            BackendError::Transport { .. } | BackendError::Protocol { .. } => {
                ApiError::new(ErrorCode::Transport, err.to_string())
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        if let Some(source) = err.backend_error() {
            let mapped = ApiError::from(source.clone());
            return ApiError::new(mapped.code, err.to_string());
        }
        let code = match &err {
            SessionError::State(_) | SessionError::Stopped(_) => ErrorCode::State,
            SessionError::Validation(_)
            | SessionError::Prompt(_)
            | SessionError::CannotSimulate(_)
            | SessionError::Evaluation(_) => ErrorCode::Validation,
            SessionError::Sampling(SamplingError::TooFewScores { .. }) => ErrorCode::State,
            SessionError::Sampling(_) => ErrorCode::Validation,
            SessionError::Config(_) | SessionError::Persistence(_) | SessionError::Version { .. } => {
                ErrorCode::Config
            }
        };
        let mut api = ApiError::new(code, err.to_string());
        if let SessionError::Stopped(reason) = err {
            api = api.with_detail(serde_json::json!({ "stop_reason": reason }));
        }
        api
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::StopReason;

    #[test]
    fn status_mapping() {
        let cases = [
            (SessionError::State("x".into()), 409),
            (SessionError::Validation("x".into()), 400),
            (SessionError::Stopped(StopReason::PoolExhausted), 409),
            (SessionError::Config("x".into()), 500),
            (
                SessionError::Sampling(SamplingError::Backend {
                    pair_id: "a".into(),
                    temperature_index: 1,
                    source: BackendError::Transport {
                        attempts: 3,
                        message: "down".into(),
                    },
                }),
                502,
            ),
        ];
        for (err, status) in cases {
            assert_eq!(ApiError::from(err).code.http_status(), status);
        }
    }

    #[test]
    fn body_shape() {
        let err = ApiError::from(SessionError::Stopped(StopReason::MaxIterations));
        let v = serde_json::to_value(&err).unwrap();
        assert_eq!(v["code"], "state");
        assert_eq!(v["detail"]["stop_reason"], "max_iterations");
        let plain = serde_json::to_value(ApiError::validation("bad")).unwrap();
        assert!(plain.get("detail").is_none());
    }
}
