//! Tasks, trajectories, the experience pool and the tips dictionary.
//!
//! The pool is append-only while experiences are being collected and is
//! treated as frozen afterwards. The compare and success views are borrowed
//! projections over it, keyed by task id in pool insertion order.

mod persist;

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use persist::{
    load_pool, load_tips, pool_from_str, pool_to_string, save_pool, save_tips, tips_from_str,
    tips_to_string, PersistError, POOL_SCHEMA_VERSION, TIPS_SCHEMA_VERSION,
};

/// Which side of a fold split a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub instruction: String,
    pub env_name: String,
    pub split: Split,
    #[serde(default)]
    pub fold: u32,
}

impl TaskSpec {
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        env_name: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            instruction: instruction.into(),
            env_name: env_name.into(),
            split: Split::Train,
            fold: 0,
        }
    }
}

/// One action and the environment's reply to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub action: String,
    pub observation: String,
    /// Corrective plan injected after this step's observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<String>,
}

/// Line prefix used for injected corrections when a trajectory is rendered.
pub const CORRECTION_PREFIX: &str = "[plan] ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub trial_index: u32,
    /// Text returned by the environment on reset.
    pub initial_observation: String,
    pub steps: Vec<Step>,
    pub succeeded: bool,
    pub reward: f64,
    /// Accumulated reflections visible to the agent when the trial started.
    #[serde(default)]
    pub reflections_used: String,
    /// Set when the trial ended early because a model or environment call failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>, trial_index: u32, initial_observation: String) -> Self {
        Self {
            task_id: task_id.into(),
            trial_index,
            initial_observation,
            steps: Vec::new(),
            succeeded: false,
            reward: 0.0,
            reflections_used: String::new(),
            abort_reason: None,
        }
    }

    /// Renders the trajectory the way the agent sees it in prompts.
    pub fn render(&self) -> String {
        self.render_tail(usize::MAX)
    }

    /// Renders only the last `max_steps` steps, noting how many were elided.
    pub fn render_tail(&self, max_steps: usize) -> String {
        let mut out = String::new();
        out.push_str(self.initial_observation.trim_end());
        out.push('\n');
        let skip = self.steps.len().saturating_sub(max_steps);
        if skip > 0 {
            let _ = writeln!(out, "[... {skip} earlier steps omitted ...]");
        }
        for step in &self.steps[skip..] {
            if let Some(thought) = &step.thought {
                let _ = writeln!(out, "> think: {thought}");
            }
            let _ = writeln!(out, "> {}", step.action);
            let _ = writeln!(out, "{}", step.observation.trim_end());
            if let Some(correction) = &step.correction {
                let _ = writeln!(out, "{CORRECTION_PREFIX}{correction}");
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FocusPointSet {
    pub items: Vec<String>,
    pub source_env: String,
}

impl FocusPointSet {
    pub fn render(&self) -> String {
        numbered(self.items.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipOrigin {
    Compare,
    Success,
    SuccessSupplement,
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tip {
    pub text: String,
    pub origin: TipOrigin,
}

impl Tip {
    pub fn new(text: impl Into<String>, origin: TipOrigin) -> Self {
        Self {
            text: text.into(),
            origin,
        }
    }
}

/// Per-entry tip limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TipCaps {
    /// Tips distilled by contrasting success with failures.
    pub compare: usize,
    /// Tips distilled from the success trajectory alone (supplement or first-try).
    pub success: usize,
}

impl Default for TipCaps {
    fn default() -> Self {
        Self {
            compare: 5,
            success: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TipsDictionary {
    /// Environment the tips are phrased for.
    pub env_name: String,
    pub entries: IndexMap<String, Vec<Tip>>,
}

impl TipsDictionary {
    pub fn new(env_name: impl Into<String>) -> Self {
        Self {
            env_name: env_name.into(),
            entries: IndexMap::new(),
        }
    }

    pub fn get(&self, task_id: &str) -> Option<&[Tip]> {
        self.entries.get(task_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the per-entry caps, non-empty text and duplicate-free entries.
    pub fn validate(&self, caps: TipCaps) -> Result<(), MemoryError> {
        for (task_id, tips) in &self.entries {
            let count = |pred: fn(TipOrigin) -> bool| tips.iter().filter(|t| pred(t.origin)).count();
            let compare = count(|o| o == TipOrigin::Compare);
            let success = count(|o| matches!(o, TipOrigin::Success | TipOrigin::SuccessSupplement));
            let aligned = count(|o| o == TipOrigin::Aligned);
            if compare > caps.compare
                || success > caps.success
                || aligned > caps.compare + caps.success
            {
                return Err(MemoryError::TipCapExceeded {
                    task_id: task_id.clone(),
                });
            }
            for (i, tip) in tips.iter().enumerate() {
                if tip.text.trim().is_empty() {
                    return Err(MemoryError::InvalidTip {
                        task_id: task_id.clone(),
                        reason: "empty tip text".into(),
                    });
                }
                if tips[..i].iter().any(|t| t.text == tip.text) {
                    return Err(MemoryError::InvalidTip {
                        task_id: task_id.clone(),
                        reason: format!("duplicate tip {:?}", tip.text),
                    });
                }
            }
        }
        Ok(())
    }

    /// Numbered list of the tips stored for `task_id`.
    pub fn render_entry(&self, task_id: &str) -> Option<String> {
        self.get(task_id)
            .map(|tips| numbered(tips.iter().map(|t| t.text.as_str())))
    }
}

pub(crate) fn numbered<'a>(items: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, item) in items.enumerate() {
        let _ = writeln!(out, "{}. {}", i + 1, item);
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
    #[error("task {0:?} has an empty instruction")]
    EmptyInstruction(String),
    #[error("non-contiguous trial index for task {task_id:?}: expected {expected}, got {got}")]
    NonContiguous {
        task_id: String,
        expected: u32,
        got: u32,
    },
    #[error("task {0:?} already has a successful trial")]
    AlreadySolved(String),
    #[error("trajectory for task {task_id:?} has an empty action at step {step}")]
    EmptyAction { task_id: String, step: usize },
    #[error("tips for task {task_id:?} exceed the configured caps")]
    TipCapExceeded { task_id: String },
    #[error("invalid tip for task {task_id:?}: {reason}")]
    InvalidTip { task_id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub task: TaskSpec,
    pub trials: Vec<Trajectory>,
}

impl PoolEntry {
    /// The successful trial, which is always the last one when present.
    pub fn success(&self) -> Option<&Trajectory> {
        self.trials.last().filter(|t| t.succeeded)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Trajectory> {
        self.trials.iter().filter(|t| !t.succeeded)
    }
}

/// All trials of all training tasks, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperiencePool {
    pub focus_points: FocusPointSet,
    /// Identifier of the embedder used by retrieval over this pool.
    pub embedder_id: String,
    entries: Vec<PoolEntry>,
    by_id: HashMap<String, usize>,
}

impl ExperiencePool {
    pub fn new(focus_points: FocusPointSet, embedder_id: impl Into<String>) -> Self {
        Self {
            focus_points,
            embedder_id: embedder_id.into(),
            entries: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn add_task(&mut self, task: TaskSpec) -> Result<(), MemoryError> {
        if task.instruction.trim().is_empty() {
            return Err(MemoryError::EmptyInstruction(task.id));
        }
        if self.by_id.contains_key(&task.id) {
            return Err(MemoryError::DuplicateTask(task.id));
        }
        self.by_id.insert(task.id.clone(), self.entries.len());
        self.entries.push(PoolEntry {
            task,
            trials: Vec::new(),
        });
        Ok(())
    }

    /// Stores a trajectory as the next trial of its task.
    pub fn append_trial(&mut self, traj: Trajectory) -> Result<(), MemoryError> {
        let idx = *self
            .by_id
            .get(&traj.task_id)
            .ok_or_else(|| MemoryError::UnknownTask(traj.task_id.clone()))?;
        let entry = &mut self.entries[idx];
        let expected = entry.trials.len() as u32;
        if traj.trial_index != expected {
            return Err(MemoryError::NonContiguous {
                task_id: traj.task_id,
                expected,
                got: traj.trial_index,
            });
        }
        if entry.success().is_some() {
            return Err(MemoryError::AlreadySolved(traj.task_id));
        }
        if let Some(step) = traj.steps.iter().find(|s| s.action.trim().is_empty()) {
            return Err(MemoryError::EmptyAction {
                task_id: traj.task_id,
                step: step.index,
            });
        }
        entry.trials.push(traj);
        Ok(())
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn entry(&self, task_id: &str) -> Option<&PoolEntry> {
        self.by_id.get(task_id).map(|&i| &self.entries[i])
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.entry(task_id).map(|e| &e.task)
    }

    pub fn trials(&self, task_id: &str) -> &[Trajectory] {
        self.entry(task_id).map_or(&[], |e| e.trials.as_slice())
    }

    pub fn task_count(&self) -> usize {
        self.entries.len()
    }

    pub fn trial_count(&self) -> usize {
        self.entries.iter().map(|e| e.trials.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tasks with both a success and at least one failure.
    pub fn compare_view(&self) -> IndexMap<&str, CompareEntry<'_>> {
        self.entries
            .iter()
            .filter_map(|e| {
                let success = e.success()?;
                let failures: Vec<_> = e.failures().collect();
                if failures.is_empty() {
                    return None;
                }
                let entry = CompareEntry {
                    task: &e.task,
                    success,
                    failures,
                };
                Some((e.task.id.as_str(), entry))
            })
            .collect()
    }

    /// Every solved task mapped to its successful trajectory.
    pub fn success_view(&self) -> IndexMap<&str, SuccessEntry<'_>> {
        self.entries
            .iter()
            .filter_map(|e| {
                e.success().map(|success| {
                    (
                        e.task.id.as_str(),
                        SuccessEntry {
                            task: &e.task,
                            success,
                        },
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CompareEntry<'a> {
    pub task: &'a TaskSpec,
    pub success: &'a Trajectory,
    pub failures: Vec<&'a Trajectory>,
}

#[derive(Debug, Clone, Copy)]
pub struct SuccessEntry<'a> {
    pub task: &'a TaskSpec,
    pub success: &'a Trajectory,
}
