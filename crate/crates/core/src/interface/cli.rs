//! The `ape` command line.
//!
//! Every command works on one session file (`--session`, default
//! `ape-session.json`). `init` creates it from a config file plus flags;
//! the flags mirror the config keys and win over them.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;

use super::{configured_backend, ApiError, BackendFactory, SessionStore, SubmissionBody, ENV_DATA_DIR};
use crate::backend::{BackendError, BackendKind};
use crate::domain::{BinaryLabel, DomainError, SamplingPool};
use crate::evaluation::EvaluationReport;
use crate::sampling::{SamplingMode, Strategy};
use crate::session::{
    load_session, run_simulated, save_session, AnnotationSubmission, FileConfig, HttpSection,
    PendingItem, Phase, SessionError, SessionState, StopReason, SyntheticSection, TemplatePaths,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

type CliResult<T = ()> = Result<T, CliError>;

fn parse_enum<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let normalized = text.trim().to_ascii_lowercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(normalized))
        .map_err(|_| format!("unrecognized value `{text}`"))
}

fn parse_strategy(text: &str) -> Result<Strategy, String> {
    parse_enum(text)
}

fn parse_mode(text: &str) -> Result<SamplingMode, String> {
    parse_enum(text)
}

fn parse_backend(text: &str) -> Result<BackendKind, String> {
    parse_enum(text)
}

/// Flags with the same meaning as the config file keys.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    session_id: Option<String>,
    /// `synthetic` or `http`.
    #[arg(long, value_parser = parse_backend)]
    backend: Option<BackendKind>,
    /// `self_consistency` or `random`.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    committee_size: Option<usize>,
    /// `incremental` or `fixed`.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SamplingMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    candidate_cap: Option<usize>,
    #[arg(long)]
    require_explanations: Option<bool>,
    #[arg(long)]
    evaluate_each_iteration: Option<bool>,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// Line-delimited sampling pool.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Line-delimited labeled evaluation set.
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    synthetic_threshold: Option<f64>,
    #[arg(long)]
    synthetic_gain: Option<f64>,
    #[arg(long)]
    synthetic_demo_radius: Option<f64>,
    #[arg(long)]
    synthetic_demo_gain_step: Option<f64>,
    #[arg(long)]
    synthetic_seed: Option<u64>,
    #[arg(long)]
    http_base_url: Option<String>,
    #[arg(long)]
    http_model: Option<String>,
    #[arg(long)]
    http_max_output_tokens: Option<u32>,
    #[arg(long)]
    http_timeout_secs: Option<u64>,
    #[arg(long)]
    http_max_attempts: Option<u32>,
    #[arg(long)]
    http_initial_backoff_ms: Option<u64>,
    #[arg(long)]
    task_description_path: Option<PathBuf>,
    #[arg(long)]
    input_template_path: Option<PathBuf>,
    #[arg(long)]
    answer_instruction_path: Option<PathBuf>,
    #[arg(long)]
    reasoning_instruction_path: Option<PathBuf>,
}

impl ConfigFlags {
    fn is_empty(&self) -> bool {
        self.as_file_config() == FileConfig::default()
    }

    fn as_file_config(&self) -> FileConfig {
        let f = self.clone();
        FileConfig {
            session_id: f.session_id,
            backend: f.backend,
            strategy: f.strategy,
            batch_size: f.batch_size,
            committee_size: f.committee_size,
            mode: f.mode,
            seed: f.seed,
            candidate_cap: f.candidate_cap,
            require_explanations: f.require_explanations,
            evaluate_each_iteration: f.evaluate_each_iteration,
            max_iterations: f.max_iterations,
            max_in_flight: f.max_in_flight,
            pool: f.pool,
            eval: f.eval,
            synthetic: SyntheticSection {
                threshold: f.synthetic_threshold,
                gain: f.synthetic_gain,
                demo_radius: f.synthetic_demo_radius,
                demo_gain_step: f.synthetic_demo_gain_step,
                seed: f.synthetic_seed,
            },
            http: HttpSection {
                base_url: f.http_base_url,
                model: f.http_model,
                max_output_tokens: f.http_max_output_tokens,
                timeout_secs: f.http_timeout_secs,
                max_attempts: f.http_max_attempts,
                initial_backoff_ms: f.http_initial_backoff_ms,
            },
            templates: TemplatePaths {
                task_description_path: f.task_description_path,
                input_template_path: f.input_template_path,
                answer_instruction_path: f.answer_instruction_path,
                reasoning_instruction_path: f.reasoning_instruction_path,
            },
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct InitArgs {
    /// TOML config file; relative paths inside it resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace an existing session file.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    flags: ConfigFlags,
}

impl InitArgs {
    fn is_empty(&self) -> bool {
        self.config.is_none() && !self.force && self.flags.is_empty()
    }
}

#[derive(Debug, Parser)]
#[command(name = "ape", version, about = "Active prompt engineering for entity matching")]
pub struct Cli {
    /// Session file to operate on.
    #[arg(long, global = true, default_value = "ape-session.json")]
    session: PathBuf,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a session from a config file, a pool and an evaluation set.
    Init(InitArgs),
    /// Sample the next batch and print it.
    Iterate,
    /// Label the pending batch from a file or interactively.
    Annotate {
        /// JSON list, `{"submissions": [...]}` or one JSON object per line.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Evaluate the current prompt. Recorded when the session is awaiting evaluation.
    Evaluate,
    /// Run iterations unattended, creating the session first if needed.
    Run {
        /// Label every batch with the gold labels.
        #[arg(long, required = true)]
        simulate_annotator: bool,
        #[arg(long)]
        iterations: u32,
        #[command(flatten)]
        init: InitArgs,
    },
    /// Print the evaluation history as a table.
    Report,
    /// Print the current prompt with the input left as placeholders.
    ExportPrompt,
    /// Stop the loop; later iterations are refused.
    Stop,
    /// Serve the session API over HTTP.
    Serve {
        /// Directory of session files; defaults to $APE_DATA_DIR or `ape-data`.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

/// Streams and backend used by a CLI invocation.
pub struct CliEnv<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    pub backends: BackendFactory,
}

/// Runs the CLI against the process streams and the configured backend.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let mut env = CliEnv {
        stdin: &mut stdin,
        stdout: &mut stdout,
        stderr: &mut stderr,
        backends: configured_backend(),
    };
    run(args, &mut env)
}

/// Parses `args` (including the program name) and executes the command.
/// Returns 0 on success, 1 on failure and 2 on a usage error.
pub fn run<I, T>(args: I, env: &mut CliEnv<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let rendered = err.render().to_string();
            let sink: &mut dyn Write = if err.use_stderr() { env.stderr } else { env.stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return err.exit_code();
        }
    };
    match execute(cli, env) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(env.stderr, "error: {err}");
            1
        }
    }
}

fn execute(cli: Cli, env: &mut CliEnv<'_>) -> CliResult {
    let path = cli.session.as_path();
    match cli.command {
        Command::Init(init) => {
            let state = create_session(path, &init)?;
            if cli.json {
                write_json(env.stdout, &super::SessionSummary::of(&state))?;
            } else {
                writeln!(
                    env.stdout,
                    "created session `{}` at {} ({} pool pairs, {} evaluation pairs)",
                    state.session_id(),
                    path.display(),
                    state.pool().len(),
                    state.eval_set().len()
                )?;
            }
            Ok(())
        }
        Command::Iterate => {
            let mut state = open(path)?;
            let backend = (env.backends)(state.config())?;
            state.start_iteration(backend.as_ref())?;
            save_session(&state, path)?;
            let pending = state.pending_items();
            if cli.json {
                write_json(env.stdout, &pending)?;
            } else {
                writeln!(env.stdout, "iteration {} pending batch:", state.iteration() + 1)?;
                for item in &pending {
                    write_pending(env.stdout, item)?;
                }
            }
            Ok(())
        }
        Command::Annotate { labels } => {
            let mut state = open(path)?;
            if state.phase() != Phase::AwaitingAnnotation {
                return Err(SessionError::State(format!(
                    "cannot annotate while {} (run `ape iterate` first)",
                    state.phase()
                ))
                .into());
            }
            let submissions = match labels {
                Some(file) => read_submissions(&file)?,
                None => prompt_submissions(&state, env)?,
            };
            state.submit_annotations(submissions)?;
            save_session(&state, path)?;
            writeln!(
                env.stdout,
                "iteration {} annotated; {} demonstration(s); next: {}",
                state.iteration(),
                state.demonstrations().len(),
                if state.phase() == Phase::Evaluating { "evaluate" } else { "iterate" }
            )?;
            Ok(())
        }
        Command::Evaluate => {
            let mut state = open(path)?;
            let backend = (env.backends)(state.config())?;
            let (report, recorded) = if state.phase() == Phase::Evaluating {
                let report = state.run_evaluation(backend.as_ref())?;
                save_session(&state, path)?;
                (report, true)
            } else {
                (state.evaluate_current(backend.as_ref())?, false)
            };
            if cli.json {
                write_json(env.stdout, &report)?;
            } else {
                write_report_table(env.stdout, std::slice::from_ref(&report))?;
                if !recorded {
                    writeln!(env.stdout, "(not recorded: session is {})", state.phase())?;
                }
            }
            Ok(())
        }
        Command::Run {
            simulate_annotator: _,
            iterations,
            init,
        } => {
            let mut state = if path.exists() && !init.force {
                if !init.is_empty() {
                    return Err(CliError::Input(format!(
                        "{} already exists; pass --force to recreate it or drop the config flags to resume",
                        path.display()
                    )));
                }
                open(path)?
            } else {
                create_session(path, &init)?
            };
            let backend = (env.backends)(state.config())?;
            let mut completed = 0;
            while completed < iterations {
                let summary = run_simulated(&mut state, backend.as_ref(), 1)?;
                save_session(&state, path)?;
                if summary.completed_iterations == 0 {
                    break;
                }
                completed += 1;
                if !cli.json {
                    match state.evaluation_history().last() {
                        Some(r) if r.iteration == state.iteration() => writeln!(
                            env.stdout,
                            "iteration {}: f1={:.4} accuracy={:.4} demonstrations={}",
                            state.iteration(),
                            r.f1,
                            r.accuracy,
                            state.demonstrations().len()
                        )?,
                        _ => writeln!(
                            env.stdout,
                            "iteration {}: demonstrations={}",
                            state.iteration(),
                            state.demonstrations().len()
                        )?,
                    }
                }
            }
            if cli.json {
                write_json(env.stdout, &super::SessionSummary::of(&state))?;
            } else if let Some(reason) = state.stop_reason() {
                writeln!(env.stdout, "stopped after {completed} iteration(s): {reason}")?;
            }
            Ok(())
        }
        Command::Report => {
            let state = open(path)?;
            if cli.json {
                write_json(env.stdout, state.evaluation_history())?;
            } else {
                write_report_table(env.stdout, state.evaluation_history())?;
            }
            Ok(())
        }
        Command::ExportPrompt => {
            let state = open(path)?;
            let preview = state.prompt_spec()?.render_preview();
            env.stdout.write_all(preview.as_bytes())?;
            Ok(())
        }
        Command::Stop => {
            let mut state = open(path)?;
            state.stop(StopReason::UserRequested);
            save_session(&state, path)?;
            writeln!(env.stdout, "session stopped: {}", state.stop_reason().expect("just stopped"))?;
            Ok(())
        }
        Command::Serve { data_dir, addr } => {
            let dir = data_dir
                .or_else(|| std::env::var_os(ENV_DATA_DIR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("ape-data"));
            let store = Arc::new(SessionStore::new(dir, env.backends.clone())?);
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(super::http::serve(addr, store))?;
            Ok(())
        }
    }
}

fn open(path: &Path) -> CliResult<SessionState> {
    if !path.exists() {
        return Err(CliError::Input(format!(
            "no session at {}; create one with `ape init`",
            path.display()
        )));
    }
    Ok(load_session(path)?)
}

fn create_session(path: &Path, init: &InitArgs) -> CliResult<SessionState> {
    if path.exists() && !init.force {
        return Err(CliError::Input(format!(
            "{} already exists; pass --force to replace it",
            path.display()
        )));
    }
    let base = match &init.config {
        Some(file) => FileConfig::load(file)?,
        None => FileConfig::default(),
    };
    let resolved = base.merged_with(init.flags.as_file_config()).resolve()?;
    let pool_path = resolved
        .pool_path
        .ok_or_else(|| CliError::Input("no sampling pool given (--pool or `pool` in the config)".into()))?;
    let eval_path = resolved
        .eval_path
        .ok_or_else(|| CliError::Input("no evaluation set given (--eval or `eval` in the config)".into()))?;
    let pool = SamplingPool::load_jsonl(&pool_path)?;
    let eval = SamplingPool::load_jsonl(&eval_path)?;
    let session_id = resolved.session_id.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| "session".into())
    });
    let state = SessionState::new(session_id, resolved.config, pool, eval)?;
    save_session(&state, path)?;
    Ok(state)
}

fn read_submissions(file: &Path) -> CliResult<Vec<AnnotationSubmission>> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", file.display())))?;
    if let Ok(body) = serde_json::from_str::<SubmissionBody>(&text) {
        return Ok(body.into_submissions());
    }
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                CliError::Input(format!("{}:{}: invalid annotation: {e}", file.display(), i + 1))
            })
        })
        .collect()
}

fn read_line(env: &mut CliEnv<'_>) -> CliResult<String> {
    let mut line = String::new();
    if env.stdin.read_line(&mut line)? == 0 {
        return Err(CliError::Input(
            "input ended before the batch was complete; annotation is all-or-nothing, nothing was saved"
                .into(),
        ));
    }
    Ok(line.trim().to_string())
}

fn prompt_submissions(state: &SessionState, env: &mut CliEnv<'_>) -> CliResult<Vec<AnnotationSubmission>> {
    let pending = state.pending_items();
    let mut out = Vec::with_capacity(pending.len());
    for (i, item) in pending.iter().enumerate() {
        writeln!(env.stdout, "[{}/{}]", i + 1, pending.len())?;
        write_pending(env.stdout, item)?;
        let label = loop {
            write!(env.stdout, "match? [y/n]: ")?;
            env.stdout.flush()?;
            match read_line(env)?.to_ascii_lowercase().as_str() {
                "y" | "yes" | "1" => break BinaryLabel::Match,
                "n" | "no" | "0" => break BinaryLabel::NonMatch,
                _ => writeln!(env.stdout, "please answer y or n")?,
            }
        };
        let explanation = loop {
            let hint = if state.requires_explanations() { "required" } else { "optional" };
            write!(env.stdout, "explanation ({hint}): ")?;
            env.stdout.flush()?;
            let text = read_line(env)?;
            if text.is_empty() && state.requires_explanations() {
                writeln!(env.stdout, "an explanation is required for this session")?;
                continue;
            }
            break (!text.is_empty()).then_some(text);
        };
        out.push(AnnotationSubmission {
            pair_id: item.pair.id.clone(),
            label,
            explanation,
        });
    }
    Ok(out)
}

fn write_pending(out: &mut dyn Write, item: &PendingItem) -> CliResult {
    write!(out, "- {}", item.pair.id)?;
    if let Some(score) = &item.score {
        let votes: Vec<&str> = score.votes.iter().map(|v| v.answer_word()).collect();
        write!(
            out,
            "  votes=[{}] R+={:.4} H={:.4}",
            votes.join(", "),
            score.positive_ratio,
            score.entropy
        )?;
    }
    writeln!(out)?;
    for (side, record) in [("A", &item.pair.left), ("B", &item.pair.right)] {
        for line in record.to_lines().lines() {
            writeln!(out, "    {side} {line}")?;
        }
    }
    Ok(())
}

fn write_report_table(out: &mut dyn Write, reports: &[EvaluationReport]) -> CliResult {
    writeln!(
        out,
        "{:>9}  {:>8}  {:>9}  {:>6}  {:>6}  {:>4}  {:>4}  {:>4}  {:>4}  {:>11}",
        "iteration", "accuracy", "precision", "recall", "f1", "tp", "fp", "fn", "tn", "unparseable"
    )?;
    for r in reports {
        writeln!(
            out,
            "{:>9}  {:>8.4}  {:>9.4}  {:>6.4}  {:>6.4}  {:>4}  {:>4}  {:>4}  {:>4}  {:>11}",
            r.iteration,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.true_negatives,
            r.unparseable_count
        )?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize + ?Sized>(out: &mut dyn Write, value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}
