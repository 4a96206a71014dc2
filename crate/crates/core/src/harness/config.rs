//! Run configuration, read from a single TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::collector::CollectConfig;
use crate::environment::external::DEFAULT_TIMEOUT;
use crate::environment::MINIHOUSE;
use crate::gateway::BackendConfig;
use crate::memory::TipCaps;
use crate::planner::PlannerConfig;
use crate::retrieval::DEFAULT_DIMENSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_env_name")]
    pub env_name: String,
    /// Single source of randomness for task generation and fold shuffling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Upper bound on concurrently running episodes.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Overrides the environment's own step budget.
    #[serde(default)]
    pub step_budget: Option<usize>,
    pub backend: BackendConfig,
    #[serde(default)]
    pub environment: EnvironmentConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub tasks: TaskSource,
    #[serde(default)]
    pub folds: FoldConfig,
    #[serde(default)]
    pub collect: CollectConfig,
    #[serde(default)]
    pub tips: TipCaps,
    #[serde(default)]
    pub planner: PlannerConfig,
}

fn default_env_name() -> String {
    MINIHOUSE.to_owned()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// In-process simulator; only MiniHouse is built in.
    #[default]
    Builtin,
    /// Child process speaking the line protocol on stdin/stdout.
    Spawn {
        command: Vec<String>,
        #[serde(default = "default_env_timeout")]
        timeout_secs: f64,
    },
    /// TCP peer speaking the line protocol.
    Connect {
        addr: String,
        #[serde(default = "default_env_timeout")]
        timeout_secs: f64,
    },
}

fn default_env_timeout() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Remote {
        base_url: String,
        model: String,
        api_key_env: Option<String>,
        #[serde(default = "default_dim")]
        dim: usize,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self::Hashing { dim: default_dim() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSource {
    /// MiniHouse tasks cycling through `types`, seeds counting up from
    /// `first_seed`.
    Generated {
        #[serde(default = "default_task_count")]
        count: usize,
        #[serde(default)]
        first_seed: u64,
        /// Task type slugs; all six when empty.
        #[serde(default)]
        types: Vec<String>,
    },
    /// JSON lines of task specs.
    File { path: PathBuf },
}

fn default_task_count() -> usize {
    24
}

impl Default for TaskSource {
    fn default() -> Self {
        Self::Generated {
            count: default_task_count(),
            first_seed: 0,
            types: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldConfig {
    pub n_folds: usize,
}

impl Default for FoldConfig {
    fn default() -> Self {
        Self { n_folds: 2 }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_owned(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Parses and validates a config document. Errors name the offending
    /// field by its dotted path.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let de = toml::Deserializer::parse(text).map_err(|e| invalid("(document)", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().message().trim().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(p) = self.backend.script_path.as_mut() {
            fix(p);
        }
        if let TaskSource::File { path } = &mut self.tasks {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.env_name.trim().is_empty() {
            return Err(invalid("env_name", "must not be empty"));
        }
        if self.jobs == 0 {
            return Err(invalid("jobs", "must be at least 1"));
        }
        if self.step_budget == Some(0) {
            return Err(invalid("step_budget", "must be at least 1"));
        }
        self.backend.validate("backend.").map_err(|e| match e {
            crate::gateway::GatewayError::Config { field, message } => HarnessError::Config { field, message },
            other => invalid("backend", other.to_string()),
        })?;
        match &self.environment {
            EnvironmentConfig::Builtin if self.env_name != MINIHOUSE => {
                return Err(invalid(
                    "environment.kind",
                    format!("no built-in simulator for {:?}; use spawn or connect", self.env_name),
                ));
            }
            EnvironmentConfig::Spawn { command, timeout_secs } => {
                if command.is_empty() {
                    return Err(invalid("environment.command", "must name a program"));
                }
                check_timeout(*timeout_secs)?;
            }
            EnvironmentConfig::Connect { timeout_secs, .. } => check_timeout(*timeout_secs)?,
            EnvironmentConfig::Builtin => {}
        }
        let dim = match &self.embedder {
            EmbedderConfig::Hashing { dim } | EmbedderConfig::Remote { dim, .. } => *dim,
        };
        if dim == 0 {
            return Err(invalid("embedder.dim", "must be at least 1"));
        }
        if self.folds.n_folds < 2 {
            return Err(invalid("folds.n_folds", "must be at least 2"));
        }
        if let TaskSource::Generated { count, types, .. } = &self.tasks {
            if self.env_name != MINIHOUSE {
                return Err(invalid("tasks.source", "generated tasks exist only for minihouse"));
            }
            if *count < self.folds.n_folds {
                return Err(invalid(
                    "tasks.count",
                    format!("need at least {} tasks for {} folds", self.folds.n_folds, self.folds.n_folds),
                ));
            }
            for (i, slug) in types.iter().enumerate() {
                if crate::environment::minihouse::TaskType::from_slug(slug).is_none() {
                    return Err(invalid(&format!("tasks.types[{i}]"), format!("unknown task type {slug:?}")));
                }
            }
        }
        if self.tips.compare == 0 || self.tips.success == 0 {
            return Err(invalid("tips", "caps must be at least 1"));
        }
        self.planner
            .trigger
            .compile()
            .map_err(|m| invalid("planner.trigger", m))?;
        Ok(())
    }
}

fn check_timeout(secs: f64) -> Result<(), HarnessError> {
    if secs.is_finite() && secs > 0.0 {
        Ok(())
    } else {
        Err(invalid("environment.timeout_secs", "must be a positive number of seconds"))
    }
}
