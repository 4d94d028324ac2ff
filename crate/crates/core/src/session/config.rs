//! Session configuration and the structured config file it is read from.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::backend::{BackendConfig, BackendKind, HttpBackendConfig, RetryPolicy};
use crate::prompting::PromptTemplates;
use crate::sampling::{RequestParams, SamplingConfig, SamplingMode, Strategy};

/// Everything a session needs besides its data, stored inside the session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub sampling: SamplingConfig,
    pub backend: BackendConfig,
    pub templates: PromptTemplates,
    pub require_explanations: bool,
    pub evaluate_each_iteration: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<u32>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::for_sampling(SamplingConfig::default())
    }
}

impl SessionConfig {
    /// Defaults around a sampling configuration; explanations are required for
    /// self-consistency sampling and optional for random sampling.
    pub fn for_sampling(sampling: SamplingConfig) -> Self {
        let mut backend = BackendConfig::default();
        backend.synthetic.seed = sampling.seed;
        SessionConfig {
            require_explanations: sampling.strategy == Strategy::SelfConsistency,
            sampling,
            backend,
            templates: PromptTemplates::default(),
            evaluate_each_iteration: true,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        self.sampling.validate().map_err(SessionError::Config)?;
        self.templates
            .validate()
            .map_err(|e| SessionError::Config(e.to_string()))?;
        if self.backend.max_in_flight == 0 {
            return Err(SessionError::Config("max_in_flight must be positive".into()));
        }
        if self.backend.kind == BackendKind::Synthetic {
            self.backend
                .synthetic
                .validate()
                .map_err(|e| SessionError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn request_params(&self) -> RequestParams {
        RequestParams {
            model_id: self.backend.model_id().to_string(),
            max_output_tokens: self.backend.max_output_tokens(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatePaths {
    pub task_description_path: Option<PathBuf>,
    pub input_template_path: Option<PathBuf>,
    pub answer_instruction_path: Option<PathBuf>,
    pub reasoning_instruction_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub threshold: Option<f64>,
    pub gain: Option<f64>,
    pub demo_radius: Option<f64>,
    pub demo_gain_step: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub max_output_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
    pub initial_backoff_ms: Option<u64>,
}

/// The on-disk config file. Every key is optional; CLI flags with the same
/// name (`batch_size` ↔ `--batch-size`) override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub session_id: Option<String>,
    pub backend: Option<BackendKind>,
    pub strategy: Option<Strategy>,
    pub batch_size: Option<usize>,
    pub committee_size: Option<usize>,
    pub mode: Option<SamplingMode>,
    pub seed: Option<u64>,
    pub candidate_cap: Option<usize>,
    pub require_explanations: Option<bool>,
    pub evaluate_each_iteration: Option<bool>,
    pub max_iterations: Option<u32>,
    pub max_in_flight: Option<usize>,
    pub pool: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SyntheticSection,
    #[serde(default)]
    pub http: HttpSection,
    #[serde(default)]
    pub templates: TemplatePaths,
}

/// A resolved config file: session config plus the data files it names.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub session_id: Option<String>,
    pub config: SessionConfig,
    pub pool_path: Option<PathBuf>,
    pub eval_path: Option<PathBuf>,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SessionError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.rebase(base);
        Ok(config)
    }

    /// Makes relative file paths relative to `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.pool);
        fix(&mut self.eval);
        fix(&mut self.templates.task_description_path);
        fix(&mut self.templates.input_template_path);
        fix(&mut self.templates.answer_instruction_path);
        fix(&mut self.templates.reasoning_instruction_path);
    }

    /// Values set in `overrides` win.
    pub fn merged_with(mut self, overrides: FileConfig) -> Self {
        macro_rules! take {
            ($($field:ident).+) => {
                if overrides.$($field).+.is_some() {
                    self.$($field).+ = overrides.$($field).+;
                }
            };
        }
        take!(session_id);
        take!(backend);
        take!(strategy);
        take!(batch_size);
        take!(committee_size);
        take!(mode);
        take!(seed);
        take!(candidate_cap);
        take!(require_explanations);
        take!(evaluate_each_iteration);
        take!(max_iterations);
        take!(max_in_flight);
        take!(pool);
        take!(eval);
        take!(synthetic.threshold);
        take!(synthetic.gain);
        take!(synthetic.demo_radius);
        take!(synthetic.demo_gain_step);
        take!(synthetic.seed);
        take!(http.base_url);
        take!(http.model);
        take!(http.max_output_tokens);
        take!(http.timeout_secs);
        take!(http.max_attempts);
        take!(http.initial_backoff_ms);
        take!(templates.task_description_path);
        take!(templates.input_template_path);
        take!(templates.answer_instruction_path);
        take!(templates.reasoning_instruction_path);
        self
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, SessionError> {
        let defaults = SamplingConfig::default();
        let sampling = SamplingConfig {
            strategy: self.strategy.unwrap_or(defaults.strategy),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            committee_size: self.committee_size.unwrap_or(defaults.committee_size),
            mode: self.mode.unwrap_or(defaults.mode),
            seed: self.seed.unwrap_or(defaults.seed),
            candidate_cap: self.candidate_cap,
        };
        let mut config = SessionConfig::for_sampling(sampling);
        if let Some(required) = self.require_explanations {
            config.require_explanations = required;
        }
        if let Some(evaluate) = self.evaluate_each_iteration {
            config.evaluate_each_iteration = evaluate;
        }
        config.max_iterations = self.max_iterations;

        let backend = &mut config.backend;
        backend.kind = self.backend.unwrap_or_default();
        if let Some(n) = self.max_in_flight {
            backend.max_in_flight = n;
        }
        let s = &self.synthetic;
        let synthetic = &mut backend.synthetic;
        synthetic.threshold = s.threshold.unwrap_or(synthetic.threshold);
        synthetic.gain = s.gain.unwrap_or(synthetic.gain);
        synthetic.demo_radius = s.demo_radius.unwrap_or(synthetic.demo_radius);
        synthetic.demo_gain_step = s.demo_gain_step.unwrap_or(synthetic.demo_gain_step);
        synthetic.seed = s.seed.unwrap_or(synthetic.seed);
        let h = &self.http;
        let http_defaults = HttpBackendConfig::default();
        backend.http = HttpBackendConfig {
            base_url: h.base_url.clone(),
            model: h.model.clone().unwrap_or(http_defaults.model),
            max_output_tokens: h.max_output_tokens.unwrap_or(http_defaults.max_output_tokens),
            timeout_secs: h.timeout_secs.unwrap_or(http_defaults.timeout_secs),
            retry: RetryPolicy {
                max_attempts: h.max_attempts.unwrap_or(http_defaults.retry.max_attempts),
                initial_backoff_ms: h
                    .initial_backoff_ms
                    .unwrap_or(http_defaults.retry.initial_backoff_ms),
                ..http_defaults.retry
            },
        };

        let read = |path: &Option<PathBuf>, target: &mut String| -> Result<(), SessionError> {
            if let Some(path) = path {
                *target = std::fs::read_to_string(path)
                    .map_err(|e| {
                        SessionError::Config(format!("cannot read template {}: {e}", path.display()))
                    })?
                    .trim_end()
                    .to_string();
            }
            Ok(())
        };
        let t = &self.templates;
        read(&t.task_description_path, &mut config.templates.task_description)?;
        read(&t.input_template_path, &mut config.templates.input_template)?;
        read(&t.answer_instruction_path, &mut config.templates.answer_instruction)?;
        read(&t.reasoning_instruction_path, &mut config.templates.reasoning_instruction)?;

        config.validate()?;
        Ok(ResolvedConfig {
            session_id: self.session_id.clone(),
            config,
            pool_path: self.pool.clone(),
            eval_path: self.eval.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_strategy() {
        let r = FileConfig::from_toml_str("strategy = \"random\"").unwrap().resolve().unwrap();
        assert!(!r.config.require_explanations);
        let r = FileConfig::from_toml_str("").unwrap().resolve().unwrap();
        assert!(r.config.require_explanations);
        assert_eq!(r.config.sampling.committee_size, 3);
        assert_eq!(r.config.backend.kind, BackendKind::Synthetic);
    }

    #[test]
    fn synthetic_seed_defaults_to_sampling_seed() {
        let r = FileConfig::from_toml_str("seed = 9").unwrap().resolve().unwrap();
        assert_eq!(r.config.backend.synthetic.seed, 9);
        let r = FileConfig::from_toml_str("seed = 9\n[synthetic]\nseed = 4")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(r.config.backend.synthetic.seed, 4);
    }

    #[test]
    fn overrides_win() {
        let base = FileConfig::from_toml_str("batch_size = 2\nmode = \"fixed\"").unwrap();
        let over = FileConfig {
            batch_size: Some(5),
            ..Default::default()
        };
        let r = base.merged_with(over).resolve().unwrap();
        assert_eq!(r.config.sampling.batch_size, 5);
        assert_eq!(r.config.sampling.mode, SamplingMode::Fixed);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(FileConfig::from_toml_str("committee_size = 1").unwrap().resolve().is_err());
        assert!(FileConfig::from_toml_str("batch_size = 0").unwrap().resolve().is_err());
        assert!(FileConfig::from_toml_str("unknown_key = 1").is_err());
        assert!(FileConfig::from_toml_str("[synthetic]\nthreshold = 1.5")
            .unwrap()
            .resolve()
            .is_err());
    }

    #[test]
    fn relative_paths_rebased() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("ape.toml");
        std::fs::write(dir.path().join("task.txt"), "Custom task.\n").unwrap();
        std::fs::write(
            &cfg_path,
            "pool = \"pool.jsonl\"\n[templates]\ntask_description_path = \"task.txt\"\n",
        )
        .unwrap();
        let cfg = FileConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.pool.as_deref(), Some(dir.path().join("pool.jsonl").as_path()));
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.config.templates.task_description, "Custom task.");
    }
}
