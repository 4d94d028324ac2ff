//! Gold-echoing annotator for unattended runs.

use super::{AnnotationSubmission, Phase, SessionError, SessionState};

/// Explanation attached to every simulated annotation when explanations are required.
pub const SIMULATED_EXPLANATION: &str =
    "Simulated annotator: label copied from the gold standard for this pair.";

/// One submission per pending pair, echoing its gold label.
pub fn simulated_annotations(state: &SessionState) -> Result<Vec<AnnotationSubmission>, SessionError> {
    if state.phase() != Phase::AwaitingAnnotation {
        return Err(SessionError::State(format!(
            "cannot simulate annotation while {}",
            state.phase()
        )));
    }
    let explanation = state
        .requires_explanations()
        .then(|| SIMULATED_EXPLANATION.to_string());
    state
        .pending_batch()
        .unwrap_or_default()
        .iter()
        .map(|id| {
            let pair = state
                .pool()
                .get(id)
                .ok_or_else(|| SessionError::State(format!("pending pair `{id}` missing from pool")))?;
            let label = pair.gold.ok_or_else(|| SessionError::CannotSimulate(id.clone()))?;
            Ok(AnnotationSubmission {
                pair_id: id.clone(),
                label,
                explanation: explanation.clone(),
            })
        })
        .collect()
}
