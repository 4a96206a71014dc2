//! End-to-end runs: configuration, fold splitting, the collect / tips /
//! eval / report stages and their on-disk artifacts.

mod config;
mod folds;
mod metrics;
mod pipeline;

use std::path::Path;

use thiserror::Error;

pub use config::{EmbedderConfig, EnvironmentConfig, FoldConfig, RunConfig, TaskSource};
pub use folds::{partition, split_folds};
pub use metrics::{
    aggregate, compute_metrics, mean_and_stderr, outcome_of, report_from_outcomes, AggregateReport,
    FoldMetrics, MetricsReport, RunSummary, TaskOutcome,
};
pub use pipeline::{report, CollectSummary, Runner, TipsSummary};

use crate::collector::CollectError;
use crate::environment::EnvError;
use crate::gateway::GatewayError;
use crate::memory::PersistError;
use crate::planner::PlanError;
use crate::retrieval::EmbedError;
use crate::tipper::TipError;

pub const EXIT_OK: i32 = 0;
/// The run finished but some evaluation episodes failed.
pub const EXIT_TASK_FAILURES: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {field}: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("fold split: {0}")]
    Fold(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Tips(#[from] TipError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
