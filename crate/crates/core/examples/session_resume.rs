//! Drives a session by hand, saves it mid-iteration and resumes from disk.

use ape::backend::{SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::grid_pool;
use ape::session::{
    load_session, save_session, simulated_annotations, SessionConfig, SessionState,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("session.json");
    let backend = SyntheticBackend::new(SyntheticBackendConfig::default())?;

    let mut state = SessionState::new(
        "resume-demo",
        SessionConfig::default(),
        grid_pool(30, "p", 0.5),
        grid_pool(9, "e", 0.5),
    )?;
    let batch = state.start_iteration(&backend)?;
    println!("phase {} with pending {:?}", state.phase(), batch);
    save_session(&state, &path)?;

    // A fresh process would start here.
    let mut resumed = load_session(&path)?;
    assert_eq!(resumed, state);
    let answers = simulated_annotations(&resumed)?;
    resumed.submit_annotations(answers)?;
    let report = resumed.run_evaluation(&backend)?;
    println!(
        "iteration {} done: {} demonstrations, F1 {:.3}",
        resumed.iteration(),
        resumed.demonstrations().len(),
        report.f1
    );
    save_session(&resumed, &path)?;
    println!("saved {} bytes to {}", std::fs::metadata(&path)?.len(), path.display());
    Ok(())
}
