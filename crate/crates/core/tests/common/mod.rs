#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ape::backend::{RecordingBackend, SyntheticBackend, SyntheticBackendConfig};
use ape::datagen::grid_pool;
use ape::interface::cli::{run, CliEnv};
use ape::interface::{shared_backend, BackendFactory};

/// Writes a grid pool and a grid evaluation set as line-delimited files.
pub fn write_data(dir: &Path, pool_size: usize, eval_size: usize) -> (PathBuf, PathBuf) {
    let pool = dir.join("pool.jsonl");
    let eval = dir.join("eval.jsonl");
    std::fs::write(&pool, grid_pool(pool_size, "p", 0.5).to_jsonl()).unwrap();
    std::fs::write(&eval, grid_pool(eval_size, "e", 0.5).to_jsonl()).unwrap();
    (pool, eval)
}

pub fn recording_synthetic(seed: u64) -> Arc<RecordingBackend<SyntheticBackend>> {
    Arc::new(RecordingBackend::new(
        SyntheticBackend::new(SyntheticBackendConfig::default().with_seed(seed)).unwrap(),
    ))
}

pub struct CliOutput {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process with the given stdin and backend factory.
pub fn cli_with(args: &[&str], stdin: &str, backends: BackendFactory) -> CliOutput {
    let mut input = std::io::Cursor::new(stdin.as_bytes().to_vec());
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let mut env = CliEnv {
        stdin: &mut input,
        stdout: &mut stdout,
        stderr: &mut stderr,
        backends,
    };
    let mut full = vec!["ape"];
    full.extend_from_slice(args);
    let code = run(full, &mut env);
    CliOutput {
        code,
        stdout: String::from_utf8(stdout).unwrap(),
        stderr: String::from_utf8(stderr).unwrap(),
    }
}

pub fn cli(args: &[&str]) -> CliOutput {
    cli_with(args, "", ape::interface::configured_backend())
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn shared<B: ape::backend::CompletionBackend + 'static>(b: Arc<B>) -> BackendFactory {
    shared_backend(b)
}
