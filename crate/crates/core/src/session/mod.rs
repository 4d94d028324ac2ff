//! The annotation loop.
//!
//! A [`SessionState`] moves through `idle → awaiting_annotation → evaluating →
//! idle`. [`SessionState::start_iteration`] samples a batch against the current
//! prompt, [`SessionState::submit_annotations`] folds a complete batch into the
//! demonstrations and [`SessionState::run_evaluation`] scores the new prompt.
//! Every transition either succeeds or leaves the state untouched.

mod annotator;
mod config;
mod persist;

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend};
use crate::domain::{BinaryLabel, EntityPair, PairId, SamplingPool, UncertaintyScore};
use crate::evaluation::{evaluate, EvaluationError, EvaluationReport};
use crate::prompting::{Demonstration, PromptError, PromptSpec};
use crate::sampling::{
    committee_candidates, sample_random, score_pairs, select_top_k, update_demonstrations,
    SamplingError, SamplingMode, Strategy,
};

pub use annotator::{simulated_annotations, SIMULATED_EXPLANATION};
pub use config::{
    FileConfig, HttpSection, ResolvedConfig, SessionConfig, SyntheticSection, TemplatePaths,
};
pub use persist::{
    load_session, save_session, session_from_json, session_to_json, SESSION_SCHEMA_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Validation(String),
    #[error("session stopped: {0}")]
    Stopped(StopReason),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Sampling(SamplingError),
    #[error(transparent)]
    Evaluation(EvaluationError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot simulate annotation: pair `{0}` has no gold label")]
    CannotSimulate(PairId),
    #[error("session file: {0}")]
    Persistence(String),
    #[error("unsupported session schema version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },
}

impl SessionError {
    /// Whether the error came from the completion backend.
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            SessionError::Sampling(SamplingError::Backend { source, .. })
            | SessionError::Evaluation(EvaluationError::Backend { source, .. }) => Some(source),
            _ => None,
        }
    }
}

impl From<SamplingError> for SessionError {
    fn from(err: SamplingError) -> Self {
        match err {
            SamplingError::PoolExhausted { .. } => SessionError::Stopped(StopReason::PoolExhausted),
            other => SessionError::Sampling(other),
        }
    }
}

impl From<EvaluationError> for SessionError {
    fn from(err: EvaluationError) -> Self {
        match err {
            EvaluationError::MissingGold(id) => {
                SessionError::Validation(format!("evaluation pair `{id}` has no gold label"))
            }
            other => SessionError::Evaluation(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    AwaitingAnnotation,
    Evaluating,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Idle => "idle",
            Phase::AwaitingAnnotation => "awaiting_annotation",
            Phase::Evaluating => "evaluating",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    UserRequested,
    PoolExhausted,
    MaxIterations,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::UserRequested => "stopped by user",
            StopReason::PoolExhausted => "sampling pool exhausted",
            StopReason::MaxIterations => "max_iterations reached",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSubmission {
    pub pair_id: PairId,
    pub label: BinaryLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl AnnotationSubmission {
    pub fn new(pair_id: impl Into<PairId>, label: BinaryLabel) -> Self {
        AnnotationSubmission {
            pair_id: pair_id.into(),
            label,
            explanation: None,
        }
    }

    pub fn with_explanation(mut self, explanation: impl Into<String>) -> Self {
        self.explanation = Some(explanation.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub iteration: u32,
    pub pair_id: PairId,
    pub label: BinaryLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// The iteration the batch was sampled for (1-based).
    pub iteration: u32,
    pub score: UncertaintyScore,
}

/// A pending pair together with the committee evidence that selected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingItem {
    pub pair: EntityPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<UncertaintyScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub(crate) version: String,
    pub(crate) session_id: String,
    pub(crate) config: SessionConfig,
    pub(crate) pool: SamplingPool,
    pub(crate) eval_set: SamplingPool,
    pub(crate) iteration: u32,
    pub(crate) phase: Phase,
    pub(crate) demonstrations: Vec<Demonstration>,
    pub(crate) pending_batch: Option<Vec<PairId>>,
    pub(crate) annotation_history: Vec<AnnotationRecord>,
    pub(crate) score_history: Vec<ScoreRecord>,
    pub(crate) evaluation_history: Vec<EvaluationReport>,
    pub(crate) stop_reason: Option<StopReason>,
    pub(crate) rng: ChaCha8Rng,
}

impl SessionState {
    pub fn new(
        session_id: impl Into<String>,
        config: SessionConfig,
        pool: SamplingPool,
        eval_set: SamplingPool,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let session_id = session_id.into();
        if session_id.trim().is_empty() {
            return Err(SessionError::Validation("session id must be nonempty".into()));
        }
        if let Some(pair) = eval_set.pairs().iter().find(|p| p.gold.is_none()) {
            return Err(SessionError::Validation(format!(
                "evaluation pair `{}` has no gold label",
                pair.id
            )));
        }
        if let Some(id) = eval_set.ids().find(|id| pool.contains(id)) {
            return Err(SessionError::Validation(format!(
                "pair `{id}` appears in both the sampling pool and the evaluation set"
            )));
        }
        if pool.len() < config.sampling.batch_size {
            return Err(SessionError::Validation(format!(
                "sampling pool has {} pair(s), fewer than batch_size {}",
                pool.len(),
                config.sampling.batch_size
            )));
        }
        let rng = ChaCha8Rng::seed_from_u64(config.sampling.seed);
        Ok(SessionState {
            version: SESSION_SCHEMA_VERSION.to_string(),
            session_id,
            config,
            pool,
            eval_set,
            iteration: 0,
            phase: Phase::Idle,
            demonstrations: Vec::new(),
            pending_batch: None,
            annotation_history: Vec::new(),
            score_history: Vec::new(),
            evaluation_history: Vec::new(),
            stop_reason: None,
            rng,
        })
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn pool(&self) -> &SamplingPool {
        &self.pool
    }

    pub fn eval_set(&self) -> &SamplingPool {
        &self.eval_set
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn demonstrations(&self) -> &[Demonstration] {
        &self.demonstrations
    }

    pub fn pending_batch(&self) -> Option<&[PairId]> {
        self.pending_batch.as_deref()
    }

    pub fn annotation_history(&self) -> &[AnnotationRecord] {
        &self.annotation_history
    }

    pub fn score_history(&self) -> &[ScoreRecord] {
        &self.score_history
    }

    pub fn evaluation_history(&self) -> &[EvaluationReport] {
        &self.evaluation_history
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop_reason
    }

    pub fn requires_explanations(&self) -> bool {
        self.config.require_explanations
    }

    pub fn prompt_spec(&self) -> Result<PromptSpec, SessionError> {
        Ok(self.config.templates.prompt_spec(self.demonstrations.clone())?)
    }

    pub fn is_finished(&self) -> bool {
        self.stop_reason.is_some()
    }

    /// Records why the loop ends. Later calls do not overwrite the first reason.
    pub fn stop(&mut self, reason: StopReason) {
        self.stop_reason.get_or_insert(reason);
    }

    fn annotated_ids(&self) -> HashSet<PairId> {
        self.annotation_history.iter().map(|r| r.pair_id.clone()).collect()
    }

    fn expect_phase(&self, expected: Phase, action: &str) -> Result<(), SessionError> {
        if self.phase != expected {
            return Err(SessionError::State(format!(
                "cannot {action} while {} (expected {expected})",
                self.phase
            )));
        }
        Ok(())
    }

    /// Step 1: picks the next batch using the configured strategy and the current prompt.
    ///
    /// Fails with [`SessionError::Stopped`] when the session has already
    /// stopped, the iteration bound is reached, or too few unannotated pairs
    /// remain; the caller decides whether to record that via [`Self::stop`].
    pub fn start_iteration(
        &mut self,
        backend: &dyn CompletionBackend,
    ) -> Result<Vec<PairId>, SessionError> {
        self.expect_phase(Phase::Idle, "start an iteration")?;
        if let Some(reason) = self.stop_reason {
            return Err(SessionError::Stopped(reason));
        }
        if matches!(self.config.max_iterations, Some(max) if self.iteration >= max) {
            return Err(SessionError::Stopped(StopReason::MaxIterations));
        }
        let sampling = &self.config.sampling;
        let k = sampling.batch_size;
        let excluded = self.annotated_ids();
        let mut rng = self.rng.clone();
        let round_seed = rng.next_u64();
        let next_iteration = self.iteration + 1;

        let (batch, scores) = match sampling.strategy {
            Strategy::Random => (sample_random(&self.pool, &excluded, k, round_seed)?, Vec::new()),
            Strategy::SelfConsistency => {
                let candidates = committee_candidates(
                    &self.pool,
                    &excluded,
                    k,
                    sampling.candidate_cap,
                    round_seed,
                )?;
                let spec = self.prompt_spec()?;
                let scores = score_pairs(
                    &candidates,
                    &spec,
                    sampling.committee_size,
                    backend,
                    &self.config.request_params(),
                )?;
                (select_top_k(&scores, k)?, scores)
            }
        };

        self.rng = rng;
        self.score_history.extend(scores.into_iter().map(|score| ScoreRecord {
            iteration: next_iteration,
            score,
        }));
        self.pending_batch = Some(batch.clone());
        self.phase = Phase::AwaitingAnnotation;
        Ok(batch)
    }

    /// The pending pairs, each with the committee score that selected it when one exists.
    pub fn pending_items(&self) -> Vec<PendingItem> {
        let Some(batch) = &self.pending_batch else {
            return Vec::new();
        };
        let next_iteration = self.iteration + 1;
        batch
            .iter()
            .filter_map(|id| {
                let pair = self.pool.get(id)?.clone();
                let score = self
                    .score_history
                    .iter()
                    .rev()
                    .find(|r| r.iteration == next_iteration && &r.score.pair_id == id)
                    .map(|r| r.score.clone());
                Some(PendingItem { pair, score })
            })
            .collect()
    }

    /// Steps 2 and 3: accepts labels for the whole pending batch and updates the prompt.
    pub fn submit_annotations(
        &mut self,
        submissions: Vec<AnnotationSubmission>,
    ) -> Result<(), SessionError> {
        self.expect_phase(Phase::AwaitingAnnotation, "submit annotations")?;
        let pending = self.pending_batch.as_ref().expect("pending batch while awaiting");
        let pending_set: HashSet<&PairId> = pending.iter().collect();
        let mut seen = HashSet::new();
        for s in &submissions {
            if !pending_set.contains(&s.pair_id) {
                return Err(SessionError::Validation(format!(
                    "pair `{}` is not in the pending batch",
                    s.pair_id
                )));
            }
            if !seen.insert(&s.pair_id) {
                return Err(SessionError::Validation(format!(
                    "duplicate annotation for pair `{}`",
                    s.pair_id
                )));
            }
        }
        if submissions.len() != pending.len() {
            let missing: Vec<String> = pending
                .iter()
                .filter(|id| !seen.contains(id))
                .map(|id| id.to_string())
                .collect();
            return Err(SessionError::Validation(format!(
                "annotation is all-or-nothing: {} of {} pending pair(s) annotated, missing {}",
                submissions.len(),
                pending.len(),
                missing.join(", ")
            )));
        }

        let next_iteration = self.iteration + 1;
        let mut accepted: Vec<AnnotationSubmission> = Vec::with_capacity(submissions.len());
        for mut s in submissions {
            s.explanation = s
                .explanation
                .map(|e| e.trim().to_string())
                .filter(|e| !e.is_empty());
            if self.config.require_explanations && s.explanation.is_none() {
                return Err(SessionError::Validation(format!(
                    "pair `{}` needs an explanation",
                    s.pair_id
                )));
            }
            accepted.push(s);
        }
        accepted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

        let mut new_demos = Vec::with_capacity(accepted.len());
        for s in &accepted {
            let pair = self.pool.get(&s.pair_id).expect("pending ids come from the pool").clone();
            new_demos.push(Demonstration::new(pair, s.label, s.explanation.clone(), next_iteration)?);
        }
        let demonstrations =
            update_demonstrations(self.config.sampling.mode, &self.demonstrations, new_demos)?;

        self.demonstrations = demonstrations;
        self.annotation_history.extend(accepted.into_iter().map(|s| AnnotationRecord {
            iteration: next_iteration,
            pair_id: s.pair_id,
            label: s.label,
            explanation: s.explanation,
        }));
        self.pending_batch = None;
        self.iteration = next_iteration;
        self.phase = if self.config.evaluate_each_iteration {
            Phase::Evaluating
        } else {
            Phase::Idle
        };
        Ok(())
    }

    /// Step 4: evaluates the current prompt at temperature 0 and records the report.
    pub fn run_evaluation(
        &mut self,
        backend: &dyn CompletionBackend,
    ) -> Result<EvaluationReport, SessionError> {
        self.expect_phase(Phase::Evaluating, "evaluate")?;
        let report = self.evaluate_current(backend)?;
        self.evaluation_history.push(report.clone());
        self.phase = Phase::Idle;
        Ok(report)
    }

    /// Evaluates the current prompt without recording anything.
    pub fn evaluate_current(
        &self,
        backend: &dyn CompletionBackend,
    ) -> Result<EvaluationReport, SessionError> {
        let spec = self.prompt_spec()?;
        Ok(evaluate(
            &spec,
            &self.eval_set,
            backend,
            &self.config.request_params(),
            self.iteration,
        )?)
    }

    /// Checks the structural invariants; used after loading a session file.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(d) = self.demonstrations.iter().find(|d| !self.pool.contains(&d.pair.id)) {
            return Err(format!("demonstrations: pair `{}` is not in the pool", d.pair.id));
        }
        if let Some(id) = self.eval_set.ids().find(|id| self.pool.contains(id)) {
            return Err(format!("eval_set: pair `{id}` is also in the pool"));
        }
        match (&self.pending_batch, self.phase) {
            (Some(batch), Phase::AwaitingAnnotation) if !batch.is_empty() => {
                if let Some(id) = batch.iter().find(|id| !self.pool.contains(id)) {
                    return Err(format!("pending_batch: pair `{id}` is not in the pool"));
                }
            }
            (None, Phase::Idle | Phase::Evaluating) => {}
            _ => return Err("pending_batch: must be nonempty exactly when awaiting_annotation".into()),
        }
        let mut seen = HashSet::new();
        for record in &self.annotation_history {
            if !seen.insert(&record.pair_id) {
                return Err(format!("annotation_history: pair `{}` annotated twice", record.pair_id));
            }
        }
        if self.config.sampling.mode == SamplingMode::Incremental
            && self.demonstrations.len() != self.annotation_history.len()
        {
            return Err("demonstrations: count does not match annotation_history".into());
        }
        Ok(())
    }
}

/// How a [`run_simulated`] call ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub completed_iterations: u32,
    pub stopped: Option<StopReason>,
}

/// Runs up to `iterations` complete iterations with the simulated annotator,
/// resuming from whatever phase the session is in.
pub fn run_simulated(
    state: &mut SessionState,
    backend: &dyn CompletionBackend,
    iterations: u32,
) -> Result<RunSummary, SessionError> {
    let mut completed = 0;
    while completed < iterations {
        match state.phase() {
            Phase::Idle => match state.start_iteration(backend) {
                Ok(_) => continue,
                Err(SessionError::Stopped(reason)) => {
                    state.stop(reason);
                    return Ok(RunSummary {
                        completed_iterations: completed,
                        stopped: Some(reason),
                    });
                }
                Err(other) => return Err(other),
            },
            Phase::AwaitingAnnotation => {
                let submissions = simulated_annotations(state)?;
                state.submit_annotations(submissions)?;
                if state.phase() == Phase::Idle {
                    completed += 1;
                }
            }
            Phase::Evaluating => {
                state.run_evaluation(backend)?;
                completed += 1;
            }
        }
    }
    Ok(RunSummary {
        completed_iterations: completed,
        stopped: state.stop_reason(),
    })
}
