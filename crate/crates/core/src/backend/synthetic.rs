//! Deterministic offline model of an entity-matching LLM.
//!
//! The positive probability of a pair is a clamped linear ramp of its token
//! similarity around a threshold θ. Demonstrations whose own similarity lies
//! within `demo_radius` of θ sharpen the ramp by `demo_gain_step` each. At
//! temperature `t` the model answers "yes" with probability
//! `(1 − t)·[p ≥ 0.5] + t·p`, using one uniform draw from a stream keyed by
//! `(seed, pair id, temperature index)`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    pair_similarity, BackendError, CompletionBackend, CompletionRequest, CompletionResponse,
};
use crate::domain::PairId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticBackendConfig {
    pub threshold: f64,
    pub gain: f64,
    pub demo_radius: f64,
    pub demo_gain_step: f64,
    pub seed: u64,
}

impl Default for SyntheticBackendConfig {
    fn default() -> Self {
        SyntheticBackendConfig {
            threshold: 0.5,
            gain: 4.0,
            demo_radius: 0.15,
            demo_gain_step: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticBackendConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: &str| Err(BackendError::Config(msg.to_string()));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("synthetic threshold must lie in (0, 1)");
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return bad("synthetic gain must be positive");
        }
        if !(self.demo_radius > 0.0 && self.demo_radius <= 1.0) {
            return bad("synthetic demo_radius must lie in (0, 1]");
        }
        if !(self.demo_gain_step > 0.0 && self.demo_gain_step.is_finite()) {
            return bad("synthetic demo_gain_step must be positive");
        }
        Ok(())
    }

    /// Whether a demonstration of this similarity counts toward the gain.
    pub fn is_boundary(&self, similarity: f64) -> bool {
        (similarity - self.threshold).abs() <= self.demo_radius
    }
}

/// Positive probability `clamp(0.5 + (s − θ)·G, 0, 1)` where
/// `G = gain + demo_gain_step · #{boundary demonstrations}`.
pub fn synthetic_positive_probability<I>(
    similarity: f64,
    demonstration_similarities: I,
    config: &SyntheticBackendConfig,
) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let boundary = demonstration_similarities
        .into_iter()
        .filter(|&s| config.is_boundary(s))
        .count();
    let gain = config.gain + config.demo_gain_step * boundary as f64;
    (0.5 + (similarity - config.threshold) * gain).clamp(0.0, 1.0)
}

/// Probability of a "yes" answer at temperature `t`.
pub fn vote_probability(positive_probability: f64, temperature: f64) -> f64 {
    let greedy = if positive_probability >= 0.5 { 1.0 } else { 0.0 };
    (1.0 - temperature) * greedy + temperature * positive_probability
}

/// Uniform draw in `[0, 1)` from the stream keyed by `(seed, pair id, temperature index)`.
pub fn unit_draw(seed: u64, pair_id: &PairId, temperature_index: usize) -> f64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((pair_id.as_str().len() as u64).to_le_bytes());
    hasher.update(pair_id.as_str().as_bytes());
    hasher.update((temperature_index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key).gen::<f64>()
}

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    config: SyntheticBackendConfig,
    max_in_flight: usize,
}

impl SyntheticBackend {
    pub fn new(config: SyntheticBackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(SyntheticBackend {
            config,
            max_in_flight: 4,
        })
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn config(&self) -> &SyntheticBackendConfig {
        &self.config
    }

    pub fn decide(&self, request: &CompletionRequest) -> Result<bool, BackendError> {
        let context = request.context.as_ref().ok_or_else(|| {
            BackendError::InvalidRequest("synthetic backend requires a request context".into())
        })?;
        let p = synthetic_positive_probability(
            pair_similarity(&context.target),
            context.demonstration_pairs.iter().map(pair_similarity),
            &self.config,
        );
        let q = vote_probability(p, request.temperature);
        let u = unit_draw(self.config.seed, &context.target.id, context.temperature_index);
        Ok(u < q)
    }
}

impl CompletionBackend for SyntheticBackend {
    fn backend_id(&self) -> &str {
        "synthetic"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let started = Instant::now();
        request.validate()?;
        let text = if self.decide(request)? { "yes" } else { "no" };
        Ok(CompletionResponse {
            text: text.to_string(),
            backend_id: self.backend_id().to_string(),
            latency: started.elapsed(),
        })
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}
