//! Completion backends.
//!
//! Every backend implements [`CompletionBackend`]. Two production backends
//! exist: [`HttpBackend`] talks to any chat-completions compatible server and
//! [`SyntheticBackend`] is a deterministic offline model whose ambiguity is
//! concentrated around a similarity threshold. [`RecordingBackend`] and
//! [`ScriptedBackend`] are test doubles.

mod http;
mod mock;
mod similarity;
mod synthetic;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{EntityPair, PairId};

pub use http::{HttpBackend, HttpBackendConfig, RetryPolicy, ENV_API_KEY, ENV_BASE_URL};
pub use mock::{RecordedCall, RecordingBackend, ScriptedBackend};
pub use similarity::{jaccard, pair_similarity, record_tokens};
pub use synthetic::{
    synthetic_positive_probability, unit_draw, vote_probability, SyntheticBackend,
    SyntheticBackendConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server returned status {status}: {body}")]
    Protocol { status: u16, body: String },
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
}

/// Structured description of what a request is about. Backends that talk to a
/// real model ignore it; the synthetic backend decides from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestContext {
    pub target: EntityPair,
    pub demonstration_pairs: Vec<EntityPair>,
    /// Position of this call in the committee temperature schedule (0 for evaluation).
    pub temperature_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_id: String,
    pub context: Option<RequestContext>,
}

impl CompletionRequest {
    pub fn new(
        prompt_text: impl Into<String>,
        temperature: f64,
        max_output_tokens: u32,
        model_id: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let request = CompletionRequest {
            prompt_text: prompt_text.into(),
            temperature,
            max_output_tokens,
            model_id: model_id.into(),
            context: None,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn with_context(mut self, context: RequestContext) -> Self {
        self.context = Some(context);
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.prompt_text.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty prompt".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn target_id(&self) -> Option<&PairId> {
        self.context.as_ref().map(|c| &c.target.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    /// Raw completion; may be empty.
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
}

pub trait CompletionBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;

    /// Upper bound on concurrent `complete` calls callers should issue.
    fn max_in_flight(&self) -> usize {
        4
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }

    fn max_in_flight(&self) -> usize {
        (**self).max_in_flight()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Synthetic,
    Http,
}

/// Backend selection plus parameters for both kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub synthetic: SyntheticBackendConfig,
    #[serde(default)]
    pub http: HttpBackendConfig,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_in_flight() -> usize {
    4
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Synthetic,
            synthetic: SyntheticBackendConfig::default(),
            http: HttpBackendConfig::default(),
            max_in_flight: default_in_flight(),
        }
    }
}

impl BackendConfig {
    pub fn model_id(&self) -> &str {
        match self.kind {
            BackendKind::Synthetic => "synthetic",
            BackendKind::Http => &self.http.model,
        }
    }

    pub fn max_output_tokens(&self) -> u32 {
        match self.kind {
            BackendKind::Synthetic => 16,
            BackendKind::Http => self.http.max_output_tokens,
        }
    }

    /// Builds the configured backend. The HTTP backend reads its credential
    /// (and, when not configured, its base URL) from the environment.
    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, BackendError> {
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be positive".into()));
        }
        match self.kind {
            BackendKind::Synthetic => Ok(Box::new(
                SyntheticBackend::new(self.synthetic.clone())?.with_max_in_flight(self.max_in_flight),
            )),
            BackendKind::Http => Ok(Box::new(
                HttpBackend::from_env(self.http.clone())?.with_max_in_flight(self.max_in_flight),
            )),
        }
    }
}
