use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};
use crate::domain::PairId;

/// What a [`RecordingBackend`] saw for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub pair_id: Option<PairId>,
    pub temperature: f64,
    pub temperature_index: Option<usize>,
    pub prompt_text: String,
}

/// Wraps another backend and records every request before forwarding it.
pub struct RecordingBackend<B> {
    inner: B,
    calls: Mutex<Vec<RecordedCall>>,
}

impl<B: CompletionBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().expect("recording lock").clone()
    }

    pub fn clear(&self) {
        self.calls.lock().expect("recording lock").clear();
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("recording lock").len()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for RecordingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.lock().expect("recording lock").push(RecordedCall {
            pair_id: request.target_id().cloned(),
            temperature: request.temperature,
            temperature_index: request.context.as_ref().map(|c| c.temperature_index),
            prompt_text: request.prompt_text.clone(),
        });
        self.inner.complete(request)
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }
}

/// Returns canned completions in order, cycling when exhausted.
#[derive(Debug)]
pub struct ScriptedBackend {
    responses: Vec<Result<String, BackendError>>,
    index: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(responses.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results<I>(responses: I) -> Self
    where
        I: IntoIterator<Item = Result<String, BackendError>>,
    {
        let responses: Vec<_> = responses.into_iter().collect();
        assert!(!responses.is_empty(), "ScriptedBackend needs at least one response");
        ScriptedBackend {
            responses,
            index: AtomicUsize::new(0),
        }
    }

    pub fn fixed(response: impl Into<String>) -> Self {
        Self::new([response.into()])
    }
}

impl CompletionBackend for ScriptedBackend {
    fn backend_id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let idx = self.index.fetch_add(1, Ordering::SeqCst) % self.responses.len();
        self.responses[idx].clone().map(|text| CompletionResponse {
            text,
            backend_id: "scripted".into(),
            latency: Duration::ZERO,
        })
    }

    fn max_in_flight(&self) -> usize {
        1
    }
}
