//! Active sampling strategies.
//!
//! Random sampling draws `k` unannotated pairs uniformly. Self-consistency
//! sampling asks the backend the same prompt once per committee member, each
//! at its own temperature from [`temperature_schedule`], and ranks pairs by the
//! entropy of the resulting vote distribution.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, RequestContext};
use crate::domain::{BinaryLabel, EntityPair, PairId, SamplingPool, UncertaintyScore};
use crate::kernel::{positive_ratio, temperature_schedule, vote_entropy, KernelError};
use crate::prompting::{parse_label, Demonstration, ParsedLabel, PromptSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("pool exhausted: {remaining} unannotated pair(s) left, {requested} requested")]
    PoolExhausted { remaining: usize, requested: usize },
    #[error("pair `{pair_id}`, temperature index {temperature_index}: {source}")]
    Backend {
        pair_id: PairId,
        temperature_index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("cannot select {k} of {available} scores")]
    TooFewScores { k: usize, available: usize },
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("no new demonstrations")]
    EmptyUpdate,
    #[error("already demonstrated: `{0}`")]
    AlreadyDemonstrated(PairId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    SelfConsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Each iteration's annotations are appended to the demonstrations.
    Incremental,
    /// Each iteration's annotations replace the demonstrations.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub committee_size: usize,
    pub mode: SamplingMode,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_cap: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            strategy: Strategy::SelfConsistency,
            batch_size: 2,
            committee_size: 3,
            mode: SamplingMode::Incremental,
            seed: 0,
            candidate_cap: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.committee_size < 2 {
            return Err("committee_size must be at least 2".into());
        }
        if let Some(cap) = self.candidate_cap {
            if cap < self.batch_size {
                return Err(format!(
                    "candidate_cap ({cap}) must be at least batch_size ({})",
                    self.batch_size
                ));
            }
        }
        Ok(())
    }
}

/// Model id and output budget attached to every request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestParams {
    pub model_id: String,
    pub max_output_tokens: u32,
}

impl Default for RequestParams {
    fn default() -> Self {
        RequestParams {
            model_id: "synthetic".into(),
            max_output_tokens: 16,
        }
    }
}

fn unannotated<'a>(pool: &'a SamplingPool, excluded: &'a HashSet<PairId>) -> Vec<&'a EntityPair> {
    pool.pairs()
        .iter()
        .filter(|p| !excluded.contains(&p.id))
        .collect()
}

/// `k` distinct unannotated ids drawn uniformly without replacement.
pub fn sample_random(
    pool: &SamplingPool,
    excluded: &HashSet<PairId>,
    k: usize,
    seed: u64,
) -> Result<Vec<PairId>, SamplingError> {
    if k == 0 {
        return Err(SamplingError::ZeroBatch);
    }
    let candidates = unannotated(pool, excluded);
    if candidates.len() < k {
        return Err(SamplingError::PoolExhausted {
            remaining: candidates.len(),
            requested: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(candidates
        .choose_multiple(&mut rng, k)
        .map(|p| p.id.clone())
        .collect())
}

/// Unannotated pairs to score, in pool order; at most `cap`, chosen by seeded shuffle.
pub fn committee_candidates<'a>(
    pool: &'a SamplingPool,
    excluded: &'a HashSet<PairId>,
    k: usize,
    cap: Option<usize>,
    seed: u64,
) -> Result<Vec<&'a EntityPair>, SamplingError> {
    let mut candidates = unannotated(pool, excluded);
    if candidates.len() < k {
        return Err(SamplingError::PoolExhausted {
            remaining: candidates.len(),
            requested: k,
        });
    }
    match cap {
        Some(cap) if cap < candidates.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.shuffle(&mut rng);
            let mut keep: Vec<usize> = order.into_iter().take(cap).collect();
            keep.sort_unstable();
            candidates = keep.into_iter().map(|i| candidates[i]).collect();
        }
        _ => {}
    }
    Ok(candidates)
}

/// Runs the temperature committee on one pair.
pub fn score_pair(
    pair: &EntityPair,
    spec: &PromptSpec,
    committee_size: usize,
    backend: &dyn CompletionBackend,
    params: &RequestParams,
) -> Result<UncertaintyScore, SamplingError> {
    let schedule = temperature_schedule(committee_size)?;
    let prompt = spec.render(pair);
    let demonstration_pairs = spec.demonstration_pairs();
    let mut votes = Vec::with_capacity(committee_size);
    let mut unparseable_votes = 0;
    for (index, &temperature) in schedule.iter().enumerate() {
        let tag = |source| SamplingError::Backend {
            pair_id: pair.id.clone(),
            temperature_index: index,
            source,
        };
        let request = CompletionRequest::new(
            prompt.clone(),
            temperature,
            params.max_output_tokens,
            params.model_id.clone(),
        )
        .map_err(tag)?
        .with_context(RequestContext {
            target: pair.clone(),
            demonstration_pairs: demonstration_pairs.clone(),
            temperature_index: index,
        });
        let response = backend.complete(&request).map_err(tag)?;
        let vote = match parse_label(&response.text) {
            ParsedLabel::Label(label) => label,
            ParsedLabel::Unparseable => {
                unparseable_votes += 1;
                minority_label(&votes)
            }
        };
        votes.push(vote);
    }
    let ratio = positive_ratio(&votes)?;
    let entropy = vote_entropy(&votes)?;
    Ok(UncertaintyScore {
        pair_id: pair.id.clone(),
        votes,
        positive_ratio: ratio,
        entropy,
        unparseable_votes,
    })
}

/// The label with fewer votes so far; `Match` on a tie.
fn minority_label(votes: &[BinaryLabel]) -> BinaryLabel {
    let positives = votes.iter().filter(|v| v.is_match()).count();
    let negatives = votes.len() - positives;
    if negatives < positives {
        BinaryLabel::NonMatch
    } else {
        BinaryLabel::Match
    }
}

/// Scores every pair, issuing up to `backend.max_in_flight()` pairs concurrently.
/// Results follow input order; on failure the error of the earliest failing pair is returned.
pub fn score_pairs(
    pairs: &[&EntityPair],
    spec: &PromptSpec,
    committee_size: usize,
    backend: &dyn CompletionBackend,
    params: &RequestParams,
) -> Result<Vec<UncertaintyScore>, SamplingError> {
    temperature_schedule(committee_size)?;
    let workers = backend.max_in_flight().clamp(1, pairs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<UncertaintyScore, SamplingError>>>> =
        Mutex::new(vec![None; pairs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= pairs.len() {
                    break;
                }
                let result = score_pair(pairs[i], spec, committee_size, backend, params);
                results.lock().expect("score results lock")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("score results lock")
        .into_iter()
        .map(|r| r.expect("every pair scored"))
        .collect()
}

/// Ids of the `k` highest-entropy scores, ordered by (entropy desc, id asc).
pub fn select_top_k(scores: &[UncertaintyScore], k: usize) -> Result<Vec<PairId>, SamplingError> {
    if k == 0 {
        return Err(SamplingError::ZeroBatch);
    }
    if k > scores.len() {
        return Err(SamplingError::TooFewScores {
            k,
            available: scores.len(),
        });
    }
    let mut ranked: Vec<&UncertaintyScore> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.entropy
            .total_cmp(&a.entropy)
            .then_with(|| a.pair_id.cmp(&b.pair_id))
    });
    Ok(ranked.into_iter().take(k).map(|s| s.pair_id.clone()).collect())
}

pub fn update_demonstrations(
    mode: SamplingMode,
    current: &[Demonstration],
    new: Vec<Demonstration>,
) -> Result<Vec<Demonstration>, SamplingError> {
    if new.is_empty() {
        return Err(SamplingError::EmptyUpdate);
    }
    let existing: HashSet<&PairId> = current.iter().map(|d| &d.pair.id).collect();
    let mut incoming = HashSet::new();
    for demo in &new {
        if existing.contains(&demo.pair.id) || !incoming.insert(&demo.pair.id) {
            return Err(SamplingError::AlreadyDemonstrated(demo.pair.id.clone()));
        }
    }
    Ok(match mode {
        SamplingMode::Incremental => current.iter().cloned().chain(new).collect(),
        SamplingMode::Fixed => new,
    })
}
