//! Experience collection: focus points once per run, then up to `Z + 1`
//! ReAct trials per training task with a self-reflection after each failed
//! trial except the last.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{EnvError, EnvFactory, Environment, EnvironmentSpec};
use crate::exec::map_with_env;
use crate::gateway::{parse_action, parse_numbered_list, Bindings, Gateway, GatewayError, ParseError};
use crate::memory::{ExperiencePool, FocusPointSet, MemoryError, Step, TaskSpec, Trajectory};
use crate::trace::{Trace, TraceEvent};

pub const MAX_FOCUS_POINTS: usize = 8;

#[derive(Debug, Error)]
pub enum CollectError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{what}: model output has no list items after a retry")]
    Unparseable { what: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectConfig {
    /// Highest trial index; each task gets at most `max_retries + 1` trials.
    pub max_retries: u32,
    /// Each reflection is cut to this many characters before it is appended.
    pub reflection_char_cap: usize,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            reflection_char_cap: 1200,
        }
    }
}

/// Reflections accumulated for one task, in trial order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionLog {
    pub entries: Vec<String>,
}

impl ReflectionLog {
    /// The accumulated text handed to the next trial.
    pub fn concat(&self) -> String {
        self.entries.join("\n")
    }
}

/// Asks the Focus role for run-level guidance. One retry if the reply has
/// no list items.
pub fn generate_focus_points(gw: &Gateway, spec: &EnvironmentSpec) -> Result<FocusPointSet, CollectError> {
    if spec.description.trim().is_empty() {
        return Err(CollectError::Precondition("environment description is empty".into()));
    }
    if spec.few_shot.trim().is_empty() {
        return Err(CollectError::Precondition("few-shot examples are empty".into()));
    }
    let bindings = Bindings::new()
        .with("env_description", spec.description.as_str())
        .with("few_shot", spec.few_shot.as_str());
    for attempt in 0..2 {
        let reply = gw.complete(&gw.prompts().focus, &bindings)?;
        match parse_numbered_list(&reply, MAX_FOCUS_POINTS) {
            Ok(items) => {
                return Ok(FocusPointSet {
                    items,
                    source_env: spec.env_name.clone(),
                })
            }
            Err(ParseError::UnparseableList | ParseError::Empty) => {
                tracing::warn!(attempt, "focus point reply has no list items");
            }
        }
    }
    Err(CollectError::Unparseable {
        what: "focus points".into(),
    })
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "(none)"
    } else {
        text
    }
}

/// Runs one ReAct trial. Model and environment failures end the trial early
/// as a failure with `abort_reason` set.
pub fn run_trial(
    gw: &Gateway,
    env: &mut dyn Environment,
    task: &TaskSpec,
    focus: &FocusPointSet,
    reflections: &str,
    trial_index: u32,
) -> (Trajectory, Trace) {
    let mut trace = Trace::default();
    let spec = env.spec().clone();
    let initial = match env.reset(task) {
        Ok(obs) => obs,
        Err(e) => {
            let mut traj = Trajectory::new(&task.id, trial_index, String::new());
            traj.reflections_used = reflections.to_owned();
            abort(&mut traj, &mut trace, format!("reset failed: {e}"));
            return (traj, trace);
        }
    };
    trace.push(TraceEvent::Reset {
        task_id: task.id.clone(),
        trial_index,
        observation: initial.clone(),
    });
    let mut traj = Trajectory::new(&task.id, trial_index, initial);
    traj.reflections_used = reflections.to_owned();
    let focus_text = focus.render();

    while traj.steps.len() < spec.step_budget {
        let bindings = Bindings::new()
            .with("env_description", spec.description.as_str())
            .with("few_shot", spec.few_shot.as_str())
            .with("focus_points", focus_text.as_str())
            .with("reflections", or_none(reflections))
            .with("trajectory", traj.render());
        let reply = match gw.complete(&gw.prompts().react, &bindings) {
            Ok(r) => r,
            Err(e) => {
                abort(&mut traj, &mut trace, format!("model call failed: {e}"));
                break;
            }
        };
        let parsed = match parse_action(&reply) {
            Ok(p) => p,
            Err(e) => {
                abort(&mut traj, &mut trace, format!("unusable model reply: {e}"));
                break;
            }
        };
        let outcome = match env.step(&parsed.action) {
            Ok(o) => o,
            Err(e) => {
                abort(&mut traj, &mut trace, format!("environment step failed: {e}"));
                break;
            }
        };
        let index = traj.steps.len();
        trace.push(TraceEvent::Step {
            index,
            thought: parsed.thought.clone(),
            action: parsed.action.clone(),
            observation: outcome.observation.clone(),
            done: outcome.done,
            reward: outcome.reward,
        });
        traj.steps.push(Step {
            index,
            thought: parsed.thought,
            action: parsed.action,
            observation: outcome.observation,
            correction: None,
        });
        traj.reward = outcome.reward;
        if outcome.done {
            traj.succeeded = true;
            break;
        }
    }
    trace.push(TraceEvent::End {
        succeeded: traj.succeeded,
        reward: traj.reward,
        steps: traj.steps.len(),
    });
    (traj, trace)
}

pub(crate) fn abort(traj: &mut Trajectory, trace: &mut Trace, reason: String) {
    tracing::warn!(task = %traj.task_id, trial = traj.trial_index, "{reason}");
    trace.push(TraceEvent::Abort {
        reason: reason.clone(),
    });
    traj.succeeded = false;
    traj.abort_reason = Some(reason);
}

fn truncate_chars(text: &str, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        Some((i, _)) => text[..i].to_owned(),
        None => text.to_owned(),
    }
}

/// Self-critique of a failed trial, trimmed to `char_cap` characters.
pub fn reflect_on_failure(gw: &Gateway, traj: &Trajectory, char_cap: usize) -> Result<String, CollectError> {
    if traj.succeeded {
        return Err(CollectError::Precondition(format!(
            "trial {} of {} succeeded; only failures are reflected on",
            traj.trial_index, traj.task_id
        )));
    }
    let reply = gw.complete(
        &gw.prompts().reflect,
        &Bindings::new().with("trajectory", traj.render()),
    )?;
    Ok(truncate_chars(reply.trim(), char_cap))
}

/// Everything collection produced for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task: TaskSpec,
    pub trials: Vec<Trajectory>,
    pub traces: Vec<Trace>,
    pub reflections: ReflectionLog,
}

/// Trial loop for a single task.
pub fn collect_task(
    gw: &Gateway,
    env: &mut dyn Environment,
    task: &TaskSpec,
    focus: &FocusPointSet,
    cfg: &CollectConfig,
) -> TaskRecord {
    let mut record = TaskRecord {
        task: task.clone(),
        trials: Vec::new(),
        traces: Vec::new(),
        reflections: ReflectionLog::default(),
    };
    for z in 0..=cfg.max_retries {
        let (traj, mut trace) = run_trial(gw, env, task, focus, &record.reflections.concat(), z);
        let done = traj.succeeded;
        if !done && z < cfg.max_retries {
            match reflect_on_failure(gw, &traj, cfg.reflection_char_cap) {
                Ok(text) => {
                    trace.push(TraceEvent::TrialReflection { text: text.clone() });
                    record.reflections.entries.push(text);
                }
                Err(e) => trace.warn(format!("reflection after trial {z} failed: {e}")),
            }
        }
        record.trials.push(traj);
        record.traces.push(trace);
        if done {
            break;
        }
    }
    record
}

#[derive(Debug, Clone)]
pub struct CollectionOutcome {
    pub pool: ExperiencePool,
    pub records: Vec<TaskRecord>,
}

impl CollectionOutcome {
    pub fn reflection_logs(&self) -> IndexMap<&str, &ReflectionLog> {
        self.records
            .iter()
            .map(|r| (r.task.id.as_str(), &r.reflections))
            .collect()
    }
}

/// Fills a fresh pool from `tasks`. Focus points are generated exactly once.
/// Tasks run on up to `jobs` environments at a time unless the backend
/// needs a fixed call order; results are stored in task order either way.
pub fn collect(
    gw: &Gateway,
    envs: &dyn EnvFactory,
    tasks: &[TaskSpec],
    cfg: &CollectConfig,
    embedder_id: &str,
    jobs: usize,
) -> Result<CollectionOutcome, CollectError> {
    let spec = envs.make()?.spec().clone();
    let focus = generate_focus_points(gw, &spec)?;
    let mut pool = ExperiencePool::new(focus.clone(), embedder_id);
    for task in tasks {
        pool.add_task(task.clone())?;
    }
    let jobs = if gw.requires_sequential() { 1 } else { jobs };
    let records = map_with_env(tasks.len(), jobs, envs, &|i, env| {
        collect_task(gw, env, &tasks[i], &focus, cfg)
    })?;
    for record in &records {
        for traj in &record.trials {
            pool.append_trial(traj.clone())?;
        }
    }
    Ok(CollectionOutcome { pool, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::minihouse::{task_spec, MiniHouse, TaskType};
    use crate::gateway::{RoleId, ScriptEntry, ScriptedBackend};

    fn gateway(entries: Vec<ScriptEntry>) -> Gateway {
        Gateway::new(Box::new(ScriptedBackend::new(entries)))
    }

    fn focus() -> FocusPointSet {
        FocusPointSet {
            items: vec!["check closed receptacles".into()],
            source_env: "minihouse".into(),
        }
    }

    #[test]
    fn focus_points_from_numbered_reply() {
        let gw = gateway(vec![ScriptEntry::new(RoleId::Focus, "1. a\n2. b\n3. c")]);
        let fp = generate_focus_points(&gw, &MiniHouse::spec()).unwrap();
        assert_eq!(fp.items, ["a", "b", "c"]);
        assert_eq!(fp.source_env, "minihouse");
    }

    #[test]
    fn focus_points_retry_then_fail() {
        let gw = gateway(vec![
            ScriptEntry::new(RoleId::Focus, "just prose"),
            ScriptEntry::new(RoleId::Focus, "more prose"),
        ]);
        let err = generate_focus_points(&gw, &MiniHouse::spec()).unwrap_err();
        assert!(matches!(err, CollectError::Unparseable { .. }));
        assert_eq!(gw.trace_len(), 2);

        let gw = gateway(vec![
            ScriptEntry::new(RoleId::Focus, "prose"),
            ScriptEntry::new(RoleId::Focus, "- ok"),
        ]);
        assert_eq!(generate_focus_points(&gw, &MiniHouse::spec()).unwrap().items, ["ok"]);
    }

    #[test]
    fn empty_description_is_rejected() {
        let gw = gateway(vec![]);
        let mut spec = MiniHouse::spec();
        spec.description.clear();
        assert!(matches!(
            generate_focus_points(&gw, &spec),
            Err(CollectError::Precondition(_))
        ));
    }

    #[test]
    fn invalid_actions_exhaust_the_budget() {
        let entries = (0..20).map(|_| ScriptEntry::new(RoleId::ReAct, "dance")).collect();
        let gw = gateway(entries);
        let mut env = MiniHouse::new();
        let (traj, _) = run_trial(&gw, &mut env, &task_spec(TaskType::PickAndPlace, 7), &focus(), "", 0);
        assert_eq!(traj.steps.len(), 20);
        assert!(!traj.succeeded);
        assert!(traj.abort_reason.is_none());
    }

    #[test]
    fn budget_of_one() {
        let gw = gateway(vec![ScriptEntry::new(RoleId::ReAct, "look")]);
        let mut env = MiniHouse::with_step_budget(1);
        let (traj, _) = run_trial(&gw, &mut env, &task_spec(TaskType::PickAndPlace, 7), &focus(), "", 0);
        assert_eq!(traj.steps.len(), 1);
        assert!(!traj.succeeded);
    }

    #[test]
    fn transport_failure_aborts_the_trial() {
        let gw = gateway(vec![ScriptEntry::new(RoleId::ReAct, "look")]);
        let mut env = MiniHouse::new();
        let (traj, trace) = run_trial(&gw, &mut env, &task_spec(TaskType::PickAndPlace, 7), &focus(), "", 0);
        assert_eq!(traj.steps.len(), 1);
        assert!(!traj.succeeded);
        assert!(traj.abort_reason.as_deref().unwrap().contains("exhausted"));
        assert_eq!(trace.count(|e| matches!(e, TraceEvent::Abort { .. })), 1);
    }

    #[test]
    fn reflection_is_verbatim_and_refused_on_success() {
        let text = "I searched the fridge twice; next time check the desk first.";
        let gw = gateway(vec![ScriptEntry::new(RoleId::Reflect, text)]);
        let failed = Trajectory::new("t", 0, "room".into());
        assert_eq!(reflect_on_failure(&gw, &failed, 1200).unwrap(), text);
        let mut ok = failed.clone();
        ok.succeeded = true;
        assert!(matches!(
            reflect_on_failure(&gw, &ok, 1200),
            Err(CollectError::Precondition(_))
        ));
    }

    #[test]
    fn reflections_are_capped_and_joined() {
        let long = "x".repeat(1500);
        let mut entries: Vec<ScriptEntry> = Vec::new();
        for r in [long.as_str(), "second"] {
            entries.push(ScriptEntry::new(RoleId::ReAct, "dance"));
            entries.push(ScriptEntry::new(RoleId::Reflect, r));
        }
        entries.push(ScriptEntry::new(RoleId::ReAct, "dance").expecting("\nsecond"));
        let gw = gateway(entries);
        let mut env = MiniHouse::with_step_budget(1);
        let cfg = CollectConfig {
            max_retries: 2,
            ..CollectConfig::default()
        };
        let rec = collect_task(&gw, &mut env, &task_spec(TaskType::PickAndPlace, 7), &focus(), &cfg);
        assert_eq!(rec.trials.len(), 3);
        assert_eq!(rec.reflections.entries.len(), 2);
        assert_eq!(rec.reflections.entries[0].len(), 1200);
        assert_eq!(rec.trials[2].reflections_used, format!("{}\nsecond", "x".repeat(1200)));
        assert!(gw.drain_trace().iter().all(|r| r.error.is_none()));
    }

    #[test]
    fn zero_retries_means_one_attempt_without_reflection() {
        let gw = gateway(vec![ScriptEntry::new(RoleId::ReAct, "dance")]);
        let mut env = MiniHouse::with_step_budget(1);
        let cfg = CollectConfig {
            max_retries: 0,
            ..CollectConfig::default()
        };
        let rec = collect_task(&gw, &mut env, &task_spec(TaskType::PickAndPlace, 7), &focus(), &cfg);
        assert_eq!(rec.trials.len(), 1);
        assert!(rec.reflections.entries.is_empty());
    }
}
