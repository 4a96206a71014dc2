//! Success rate, mean reward and their spread across folds and runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::planner::EpisodeRecord;
use crate::trace::TraceEvent;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub fold: u32,
    pub succeeded: bool,
    pub reward: f64,
    pub steps: usize,
    pub triggers: usize,
    pub corrections: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: u32,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub succeeded: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub trigger_count: usize,
    pub correction_count: usize,
    pub folds: Vec<FoldMetrics>,
    /// Standard error of the per-fold success rates; absent with one fold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reward_stderr: Option<f64>,
    pub outcomes: Vec<TaskOutcome>,
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

pub fn outcome_of(record: &EpisodeRecord) -> TaskOutcome {
    let t = &record.trajectory;
    TaskOutcome {
        task_id: record.task.id.clone(),
        fold: record.task.fold,
        succeeded: t.succeeded,
        reward: t.reward,
        steps: t.steps.len(),
        triggers: record.trace.count(|e| matches!(e, TraceEvent::Trigger { .. })),
        corrections: record.trace.count(|e| matches!(e, TraceEvent::Correction { .. })),
        abort_reason: t.abort_reason.clone(),
    }
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<MetricsReport, HarnessError> {
    report_from_outcomes(records.iter().map(outcome_of).collect())
}

pub fn report_from_outcomes(outcomes: Vec<TaskOutcome>) -> Result<MetricsReport, HarnessError> {
    if outcomes.is_empty() {
        return Err(HarnessError::Metrics("no episodes to score".into()));
    }
    let rate = |os: &[&TaskOutcome]| {
        let n = os.len() as f64;
        let ok = os.iter().filter(|o| o.succeeded).count() as f64;
        (ok / n, os.iter().map(|o| o.reward).sum::<f64>() / n)
    };
    let all: Vec<&TaskOutcome> = outcomes.iter().collect();
    let (success_rate, mean_reward) = rate(&all);

    let mut by_fold: BTreeMap<u32, Vec<&TaskOutcome>> = BTreeMap::new();
    for o in &outcomes {
        by_fold.entry(o.fold).or_default().push(o);
    }
    let folds: Vec<FoldMetrics> = by_fold
        .into_iter()
        .map(|(fold, os)| {
            let (success_rate, mean_reward) = rate(&os);
            FoldMetrics {
                fold,
                episodes: os.len(),
                success_rate,
                mean_reward,
            }
        })
        .collect();
    let sr: Vec<f64> = folds.iter().map(|f| f.success_rate).collect();
    let mr: Vec<f64> = folds.iter().map(|f| f.mean_reward).collect();

    Ok(MetricsReport {
        episodes: outcomes.len(),
        succeeded: outcomes.iter().filter(|o| o.succeeded).count(),
        success_rate,
        mean_reward,
        trigger_count: outcomes.iter().map(|o| o.triggers).sum(),
        correction_count: outcomes.iter().map(|o| o.corrections).sum(),
        success_rate_stderr: mean_and_stderr(&sr).1,
        mean_reward_stderr: mean_and_stderr(&mr).1,
        folds,
        outcomes,
    })
}

impl MetricsReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "episodes {}  succeeded {}  SR {:.4}  mean reward {:.4}  triggers {}  corrections {}\n",
            self.episodes,
            self.succeeded,
            self.success_rate,
            self.mean_reward,
            self.trigger_count,
            self.correction_count
        );
        for f in &self.folds {
            let _ = writeln!(
                out,
                "  fold {}: episodes {}  SR {:.4}  mean reward {:.4}",
                f.fold, f.episodes, f.success_rate, f.mean_reward
            );
        }
        for o in self.outcomes.iter().filter(|o| !o.succeeded) {
            let _ = writeln!(
                out,
                "  failed {} after {} steps{}",
                o.task_id,
                o.steps,
                o.abort_reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Combination of several runs, typically the two fold directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: Vec<RunSummary>,
    pub success_rate: f64,
    pub mean_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_rate_stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_reward_stderr: Option<f64>,
}

/// Averages per-run metrics with equal weight per run.
pub fn aggregate(runs: &[(String, MetricsReport)]) -> Result<AggregateReport, HarnessError> {
    if runs.is_empty() {
        return Err(HarnessError::Metrics("no runs to aggregate".into()));
    }
    let sr: Vec<f64> = runs.iter().map(|(_, r)| r.success_rate).collect();
    let mr: Vec<f64> = runs.iter().map(|(_, r)| r.mean_reward).collect();
    let (success_rate, success_rate_stderr) = mean_and_stderr(&sr);
    let (mean_reward, mean_reward_stderr) = mean_and_stderr(&mr);
    Ok(AggregateReport {
        runs: runs
            .iter()
            .map(|(name, r)| RunSummary {
                name: name.clone(),
                episodes: r.episodes,
                success_rate: r.success_rate,
                mean_reward: r.mean_reward,
            })
            .collect(),
        success_rate,
        mean_reward,
        success_rate_stderr,
        mean_reward_stderr,
    })
}

impl AggregateReport {
    pub fn summary(&self) -> String {
        let pm = |e: Option<f64>| e.map(|e| format!(" ± {e:.4}")).unwrap_or_default();
        let mut out = format!(
            "SR {:.4}{}  mean reward {:.4}{}  over {} runs\n",
            self.success_rate,
            pm(self.success_rate_stderr),
            self.mean_reward,
            pm(self.mean_reward_stderr),
            self.runs.len()
        );
        for r in &self.runs {
            let _ = writeln!(
                out,
                "  {}: episodes {}  SR {:.4}  mean reward {:.4}",
                r.name, r.episodes, r.success_rate, r.mean_reward
            );
        }
        out
    }
}
