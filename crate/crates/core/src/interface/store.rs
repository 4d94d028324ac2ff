//! A directory of session files with one writer per session.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ApiError, BackendFactory, ErrorCode};
use crate::backend::CompletionBackend;
use crate::domain::{PairId, SamplingPool};
use crate::evaluation::EvaluationReport;
use crate::sampling::Strategy;
use crate::session::{
    load_session, save_session, AnnotationRecord, AnnotationSubmission, FileConfig, PendingItem,
    Phase, ScoreRecord, SessionError, SessionState, StopReason,
};

/// Inline pairs or a path to a line-delimited file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path(PathBuf),
    Inline(SamplingPool),
}

impl DataSource {
    fn load(&self) -> Result<SamplingPool, ApiError> {
        match self {
            DataSource::Inline(pool) => Ok(pool.clone()),
            DataSource::Path(path) => {
                SamplingPool::load_jsonl(path).map_err(|e| ApiError::validation(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    /// Same keys as the config file.
    #[serde(default)]
    pub config: FileConfig,
    /// Falls back to the config's `pool` path.
    #[serde(default)]
    pub pool: Option<DataSource>,
    /// Falls back to the config's `eval` path.
    #[serde(default)]
    pub eval: Option<DataSource>,
}

/// An annotation body: either a bare list or `{"submissions": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SubmissionBody {
    List(Vec<AnnotationSubmission>),
    Wrapped { submissions: Vec<AnnotationSubmission> },
}

impl SubmissionBody {
    pub fn into_submissions(self) -> Vec<AnnotationSubmission> {
        match self {
            SubmissionBody::List(list) | SubmissionBody::Wrapped { submissions: list } => list,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub iteration: u32,
    pub phase: Phase,
    pub strategy: Strategy,
    pub batch_size: usize,
    pub requires_explanations: bool,
    pub demonstration_count: usize,
    pub pending_batch: Vec<PairId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    pub evaluation_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latest_f1: Option<f64>,
}

impl SessionSummary {
    pub fn of(state: &SessionState) -> Self {
        SessionSummary {
            session_id: state.session_id().to_string(),
            iteration: state.iteration(),
            phase: state.phase(),
            strategy: state.config().sampling.strategy,
            batch_size: state.config().sampling.batch_size,
            requires_explanations: state.requires_explanations(),
            demonstration_count: state.demonstrations().len(),
            pending_batch: state.pending_batch().unwrap_or_default().to_vec(),
            stop_reason: state.stop_reason(),
            evaluation_count: state.evaluation_history().len(),
            latest_f1: state.evaluation_history().last().map(|r| r.f1),
        }
    }
}

/// Full state plus the derived views a client would otherwise recompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub summary: SessionSummary,
    pub pending: Vec<PendingItem>,
    pub state: SessionState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateView {
    pub session_id: String,
    /// The iteration these pairs will count toward once annotated.
    pub iteration: u32,
    pub strategy: Strategy,
    pub requires_explanations: bool,
    pub pending: Vec<PendingItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptView {
    pub session_id: String,
    pub iteration: u32,
    pub demonstration_count: usize,
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub session_id: String,
    pub annotations: Vec<AnnotationRecord>,
    pub evaluations: Vec<EvaluationReport>,
    pub scores: Vec<ScoreRecord>,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
        && !id.starts_with('.')
}

pub struct SessionStore {
    dir: PathBuf,
    backends: BackendFactory,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>, backends: BackendFactory) -> Result<Self, ApiError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| {
            ApiError::new(ErrorCode::Config, format!("cannot create {}: {e}", dir.display()))
        })?;
        Ok(SessionStore {
            dir,
            backends,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Where a session lives on disk. Unknown-shaped ids are reported as not found.
    pub fn path_for(&self, id: &str) -> Result<PathBuf, ApiError> {
        if !valid_session_id(id) {
            return Err(ApiError::not_found(format!("no session `{id}`")));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    fn lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn load(&self, id: &str) -> Result<SessionState, ApiError> {
        let path = self.path_for(id)?;
        if !path.exists() {
            return Err(ApiError::not_found(format!("no session `{id}`")));
        }
        Ok(load_session(&path)?)
    }

    fn backend(&self, state: &SessionState) -> Result<Box<dyn CompletionBackend>, ApiError> {
        Ok((self.backends)(state.config())?)
    }

    /// Loads, applies `op` and saves only if it succeeded, all under the session lock.
    fn mutate<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut SessionState) -> Result<T, SessionError>,
    ) -> Result<T, ApiError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        let mut state = self.load(id)?;
        let out = op(&mut state)?;
        save_session(&state, &self.path_for(id)?)?;
        Ok(out)
    }

    fn mutate_with_backend<T>(
        &self,
        id: &str,
        op: impl FnOnce(&mut SessionState, &dyn CompletionBackend) -> Result<T, SessionError>,
    ) -> Result<T, ApiError> {
        let lock = self.lock(id);
        let _guard = lock.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        let mut state = self.load(id)?;
        let backend = self.backend(&state)?;
        let out = op(&mut state, backend.as_ref())?;
        save_session(&state, &self.path_for(id)?)?;
        Ok(out)
    }

    pub fn create(&self, request: CreateSessionRequest) -> Result<SessionSummary, ApiError> {
        let id = request
            .session_id
            .clone()
            .or_else(|| request.config.session_id.clone())
            .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
        if !valid_session_id(&id) {
            return Err(ApiError::validation(format!(
                "session id `{id}` may only contain letters, digits, '-', '_' and '.'"
            )));
        }
        let resolved = request.config.resolve().map_err(|e| match e {
            SessionError::Config(message) => ApiError::validation(message),
            other => other.into(),
        })?;
        let source = |given: &Option<DataSource>, fallback: &Option<PathBuf>, what: &str| {
            given
                .clone()
                .or_else(|| fallback.clone().map(DataSource::Path))
                .ok_or_else(|| ApiError::validation(format!("missing {what}")))
        };
        let pool = source(&request.pool, &resolved.pool_path, "pool")?.load()?;
        let eval = source(&request.eval, &resolved.eval_path, "eval")?.load()?;
        let state = SessionState::new(id.clone(), resolved.config, pool, eval).map_err(|e| match e {
            SessionError::Config(message) => ApiError::validation(message),
            other => other.into(),
        })?;

        let path = self.path_for(&id)?;
        let lock = self.lock(&id);
        let _guard = lock.lock().unwrap_or_else(|poisoned| poisoned.into_inner());
        if path.exists() {
            return Err(ApiError::new(ErrorCode::State, format!("session `{id}` already exists")));
        }
        save_session(&state, &path)?;
        log::info!("created session {id}");
        Ok(SessionSummary::of(&state))
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot, ApiError> {
        let state = self.load(id)?;
        Ok(Snapshot {
            summary: SessionSummary::of(&state),
            pending: state.pending_items(),
            state,
        })
    }

    pub fn iterate(&self, id: &str) -> Result<IterateView, ApiError> {
        self.mutate_with_backend(id, |state, backend| {
            state.start_iteration(backend)?;
            Ok(IterateView {
                session_id: state.session_id().to_string(),
                iteration: state.iteration() + 1,
                strategy: state.config().sampling.strategy,
                requires_explanations: state.requires_explanations(),
                pending: state.pending_items(),
            })
        })
    }

    pub fn annotate(
        &self,
        id: &str,
        submissions: Vec<AnnotationSubmission>,
    ) -> Result<SessionSummary, ApiError> {
        self.mutate(id, |state| {
            state.submit_annotations(submissions)?;
            Ok(SessionSummary::of(state))
        })
    }

    pub fn evaluate(&self, id: &str) -> Result<EvaluationReport, ApiError> {
        self.mutate_with_backend(id, |state, backend| state.run_evaluation(backend))
    }

    /// Records a user stop; the session stays readable.
    pub fn stop(&self, id: &str) -> Result<SessionSummary, ApiError> {
        self.mutate(id, |state| {
            state.stop(StopReason::UserRequested);
            Ok(SessionSummary::of(state))
        })
    }

    pub fn prompt(&self, id: &str) -> Result<PromptView, ApiError> {
        let state = self.load(id)?;
        let spec = state.prompt_spec()?;
        Ok(PromptView {
            session_id: state.session_id().to_string(),
            iteration: state.iteration(),
            demonstration_count: spec.demonstrations().len(),
            preview: spec.render_preview(),
        })
    }

    pub fn history(&self, id: &str) -> Result<HistoryView, ApiError> {
        let state = self.load(id)?;
        Ok(HistoryView {
            session_id: state.session_id().to_string(),
            annotations: state.annotation_history().to_vec(),
            evaluations: state.evaluation_history().to_vec(),
            scores: state.score_history().to_vec(),
        })
    }
}
