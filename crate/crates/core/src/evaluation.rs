//! Zero-temperature evaluation of a prompt against labeled held-out pairs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CompletionBackend, CompletionRequest, RequestContext};
use crate::domain::{BinaryLabel, EntityPair, PairId, SamplingPool};
use crate::prompting::{parse_label, ParsedLabel, PromptSpec};
use crate::sampling::RequestParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("evaluation pair `{0}` has no gold label")]
    MissingGold(PairId),
    #[error("evaluation pair `{pair_id}`: {source}")]
    Backend {
        pair_id: PairId,
        #[source]
        source: BackendError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub pair_id: PairId,
    pub predicted: ParsedLabel,
    pub gold: BinaryLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub unparseable: usize,
}

impl ConfusionCounts {
    /// Unparseable predictions count as a wrong prediction of the opposite class.
    pub fn record(&mut self, predicted: ParsedLabel, gold: BinaryLabel) {
        let predicted = match predicted {
            ParsedLabel::Label(label) => label,
            ParsedLabel::Unparseable => {
                self.unparseable += 1;
                gold.flipped()
            }
        };
        match (predicted, gold) {
            (BinaryLabel::Match, BinaryLabel::Match) => self.true_positives += 1,
            (BinaryLabel::Match, BinaryLabel::NonMatch) => self.false_positives += 1,
            (BinaryLabel::NonMatch, BinaryLabel::Match) => self.false_negatives += 1,
            (BinaryLabel::NonMatch, BinaryLabel::NonMatch) => self.true_negatives += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub iteration: u32,
    pub per_example: Vec<ExampleOutcome>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub unparseable_count: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvaluationReport {
    /// Tallies outcomes (sorted by pair id) into counts and metrics; 0/0 is taken as 0.
    pub fn from_outcomes(iteration: u32, mut per_example: Vec<ExampleOutcome>) -> Self {
        per_example.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        let mut counts = ConfusionCounts::default();
        for outcome in &per_example {
            counts.record(outcome.predicted, outcome.gold);
        }
        let precision = ratio(counts.true_positives, counts.true_positives + counts.false_positives);
        let recall = ratio(counts.true_positives, counts.true_positives + counts.false_negatives);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvaluationReport {
            iteration,
            accuracy: ratio(counts.true_positives + counts.true_negatives, counts.total()),
            per_example,
            true_positives: counts.true_positives,
            false_positives: counts.false_positives,
            false_negatives: counts.false_negatives,
            true_negatives: counts.true_negatives,
            unparseable_count: counts.unparseable,
            precision,
            recall,
            f1,
        }
    }
}

/// Every pair is asked once at temperature 0. Gold labels are checked before any call.
pub fn evaluate(
    spec: &PromptSpec,
    eval_set: &SamplingPool,
    backend: &dyn CompletionBackend,
    params: &RequestParams,
    iteration: u32,
) -> Result<EvaluationReport, EvaluationError> {
    let mut labeled: Vec<(&EntityPair, BinaryLabel)> = Vec::with_capacity(eval_set.len());
    for pair in eval_set.pairs() {
        let gold = pair.gold.ok_or_else(|| EvaluationError::MissingGold(pair.id.clone()))?;
        labeled.push((pair, gold));
    }
    let demonstration_pairs = spec.demonstration_pairs();
    let predict = |pair: &EntityPair| -> Result<ParsedLabel, EvaluationError> {
        let tag = |source| EvaluationError::Backend {
            pair_id: pair.id.clone(),
            source,
        };
        let request = CompletionRequest::new(
            spec.render(pair),
            0.0,
            params.max_output_tokens,
            params.model_id.clone(),
        )
        .map_err(tag)?
        .with_context(RequestContext {
            target: pair.clone(),
            demonstration_pairs: demonstration_pairs.clone(),
            temperature_index: 0,
        });
        let response = backend.complete(&request).map_err(tag)?;
        Ok(parse_label(&response.text))
    };

    let workers = backend.max_in_flight().clamp(1, labeled.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ParsedLabel, EvaluationError>>>> =
        Mutex::new(vec![None; labeled.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= labeled.len() {
                    break;
                }
                let result = predict(labeled[i].0);
                slots.lock().expect("evaluation lock")[i] = Some(result);
            });
        }
    });
    let predictions = slots.into_inner().expect("evaluation lock");
    let mut outcomes = Vec::with_capacity(labeled.len());
    for ((pair, gold), prediction) in labeled.into_iter().zip(predictions) {
        outcomes.push(ExampleOutcome {
            pair_id: pair.id.clone(),
            predicted: prediction.expect("every pair evaluated")?,
            gold,
        });
    }
    Ok(EvaluationReport::from_outcomes(iteration, outcomes))
}
