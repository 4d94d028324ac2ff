//! Chat-completions client with bounded retry.

use std::time::{Duration, Instant};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResponse};

pub const ENV_BASE_URL: &str = "APE_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "APE_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based), with jitter in `[50%, 100%]`.
    pub fn backoff(&self, retry: u32) -> Duration {
        let exp = self
            .initial_backoff_ms
            .saturating_mul(1u64 << (retry.saturating_sub(1)).min(20));
        let capped = exp.min(self.max_backoff_ms);
        let jitter = rand::thread_rng().gen_range(0.5..=1.0);
        Duration::from_millis((capped as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpBackendConfig {
    /// Falls back to `APE_LLM_BASE_URL` when unset.
    pub base_url: Option<String>,
    pub model: String,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: None,
            model: "gpt-4o-mini".to_string(),
            max_output_tokens: 256,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    config: HttpBackendConfig,
    max_in_flight: usize,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let base_url = match &config.base_url {
            Some(url) => url.clone(),
            None => std::env::var(ENV_BASE_URL).unwrap_or_default(),
        };
        let api_key = std::env::var(ENV_API_KEY).unwrap_or_default();
        HttpBackend::new(config, &base_url, &api_key)
    }

    pub fn new(config: HttpBackendConfig, base_url: &str, api_key: &str) -> Result<Self, BackendError> {
        if base_url.trim().is_empty() {
            return Err(BackendError::Config(format!(
                "no base URL configured (set http.base_url or {ENV_BASE_URL})"
            )));
        }
        if api_key.trim().is_empty() {
            return Err(BackendError::Config(format!(
                "missing API credential (set {ENV_API_KEY})"
            )));
        }
        if config.retry.max_attempts == 0 {
            return Err(BackendError::Config("retry.max_attempts must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Ok(HttpBackend {
            client,
            endpoint,
            api_key: api_key.to_string(),
            config,
            max_in_flight: 4,
        })
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, Attempt> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Transient(BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            }))?;
        let status = response.status();
        let text = response.text().map_err(|e| {
            Attempt::Transient(BackendError::Transport {
                attempts: 0,
                message: e.to_string(),
            })
        })?;
        if !status.is_success() {
            let err = BackendError::Protocol {
                status: status.as_u16(),
                body: text,
            };
            return Err(if is_retryable_status(status.as_u16()) {
                Attempt::Transient(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            Attempt::Fatal(BackendError::Protocol {
                status: status.as_u16(),
                body: format!("unreadable completion ({e}): {text}"),
            })
        })?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

enum Attempt {
    Transient(BackendError),
    Fatal(BackendError),
}

fn is_retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl CompletionBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let body = json!({
            "model": request.model_id,
            "messages": [{ "role": "user", "content": request.prompt_text }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let started = Instant::now();
        let max_attempts = self.config.retry.max_attempts;
        let mut attempt = 1;
        loop {
            match self.attempt(&body) {
                Ok(text) => {
                    return Ok(CompletionResponse {
                        text,
                        backend_id: self.backend_id().to_string(),
                        latency: started.elapsed(),
                    })
                }
                Err(Attempt::Fatal(err)) => return Err(err),
                Err(Attempt::Transient(err)) if attempt >= max_attempts => {
                    return Err(match err {
                        BackendError::Transport { message, .. } => BackendError::Transport {
                            attempts: attempt,
                            message,
                        },
                        other => other,
                    })
                }
                Err(Attempt::Transient(err)) => {
                    let delay = self.config.retry.backoff(attempt);
                    warn!("completion attempt {attempt} failed ({err}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
