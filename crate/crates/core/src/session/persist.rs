//! Session files: one pretty-printed JSON document with a schema version.

use std::io::Write;
use std::path::Path;

use super::{SessionError, SessionState};

pub const SESSION_SCHEMA_VERSION: &str = "1";

pub fn session_to_json(state: &SessionState) -> Result<String, SessionError> {
    let mut text = serde_json::to_string_pretty(state)
        .map_err(|e| SessionError::Persistence(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn session_from_json(text: &str) -> Result<SessionState, SessionError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SessionError::Persistence(format!("parse error: {e}")))?;
    match value.get("version") {
        Some(serde_json::Value::String(v)) if v == SESSION_SCHEMA_VERSION => {}
        Some(serde_json::Value::String(v)) => {
            return Err(SessionError::Version {
                found: v.clone(),
                expected: SESSION_SCHEMA_VERSION.into(),
            })
        }
        Some(other) => {
            return Err(SessionError::Version {
                found: other.to_string(),
                expected: SESSION_SCHEMA_VERSION.into(),
            })
        }
        None => return Err(SessionError::Persistence("missing field `version`".into())),
    }
    let state: SessionState = serde_path_to_error::deserialize(value).map_err(|e| {
        SessionError::Persistence(format!("field `{}`: {}", e.path(), e.inner()))
    })?;
    state.check_invariants().map_err(SessionError::Persistence)?;
    Ok(state)
}

/// Writes through a temporary file in the same directory and renames it into place.
pub fn save_session(state: &SessionState, path: &Path) -> Result<(), SessionError> {
    let text = session_to_json(state)?;
    let io = |e: std::io::Error| SessionError::Persistence(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<SessionState, SessionError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SessionError::Persistence(format!("{}: {e}", path.display())))?;
    session_from_json(&text)
}
