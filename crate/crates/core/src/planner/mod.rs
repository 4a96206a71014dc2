//! Evaluation-time planning.
//!
//! Each episode starts by retrieving the most similar solved training tasks.
//! Their tips (ET) and success trajectories (ST) go into every Policy prompt.
//! When the trigger fires, the live trajectory is summarized into key
//! information, the KIR role questions it and proposes a plan, and the plan
//! is attached to the current step so all later prompts show it.

mod reflection;
mod trigger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reflection::{
    extract_key_information, reflect_key_information, KeyInformation, QaPair, ReflectionOutcome,
};
pub use trigger::{check_trigger, AnomalyPattern, Trigger, TriggerCheck, TriggerPolicy};

use crate::collector::abort;
use crate::environment::{EnvError, EnvFactory, Environment};
use crate::exec::map_with_env;
use crate::gateway::{parse_action, Bindings, Gateway, GatewayError, ParsedAction};
use crate::memory::{numbered, ExperiencePool, Step, TaskSpec, TipsDictionary, Trajectory};
use crate::retrieval::{EmbedError, Embedder, Hit, RetrievalIndex};
use crate::trace::{Trace, TraceEvent};

/// Each similar trajectory is cut to its last this-many steps.
pub const ST_TAIL_STEPS: usize = 40;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Unusable(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid trigger policy: {0}")]
    Trigger(String),
}

pub(crate) fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "(none)"
    } else {
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Number of similar tasks retrieved per episode.
    pub k: usize,
    pub trigger: TriggerPolicy,
    /// Upper bound on ET plus ST characters; unbounded when absent.
    pub context_char_budget: Option<usize>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            k: 2,
            trigger: TriggerPolicy::default(),
            context_char_budget: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeContext {
    /// Retrieved tasks, most similar first.
    pub retrieved: Vec<Hit>,
    /// Tips of the retrieved tasks, in retrieval order.
    pub et: String,
    /// Success trajectories of the retrieved tasks, in retrieval order.
    pub st: String,
    pub warnings: Vec<String>,
}

impl EpisodeContext {
    pub fn empty() -> Self {
        Self::default()
    }
}

fn render_context(
    hits: &[Hit],
    pool: &ExperiencePool,
    tips: Option<&TipsDictionary>,
    tail: usize,
) -> (String, String, Vec<String>) {
    let mut et = String::new();
    let mut st = String::new();
    let mut warnings = Vec::new();
    for hit in hits {
        let Some(entry) = pool.entry(&hit.task_id) else {
            warnings.push(format!("retrieved task {} is not in the pool", hit.task_id));
            continue;
        };
        let instruction = &entry.task.instruction;
        if let Some(td) = tips {
            match td.get(&hit.task_id) {
                Some(list) => {
                    et.push_str(&format!("Task: {instruction}\n"));
                    et.push_str(&numbered(list.iter().map(|t| t.text.as_str())));
                    et.push('\n');
                }
                None => warnings.push(format!("no tips for retrieved task {}", hit.task_id)),
            }
        }
        if let Some(success) = entry.success() {
            if success.steps.len() > tail {
                warnings.push(format!(
                    "similar trajectory {} cut to its last {tail} of {} steps",
                    hit.task_id,
                    success.steps.len()
                ));
            }
            st.push_str(&format!("Task: {instruction}\n{}\n", success.render_tail(tail)));
        }
    }
    (et, st, warnings)
}

/// Retrieves the `k` tasks most similar to `task` and renders their tips
/// and trajectories. With a character budget, the least similar experience
/// is dropped first, then the remaining trajectories are shortened.
pub fn assemble_context(
    task: &TaskSpec,
    index: &RetrievalIndex,
    embedder: &dyn Embedder,
    pool: &ExperiencePool,
    tips: Option<&TipsDictionary>,
    k: usize,
    char_budget: Option<usize>,
) -> Result<EpisodeContext, EmbedError> {
    if k == 0 {
        return Ok(EpisodeContext::empty());
    }
    let mut hits = index.query_topk(embedder, &task.instruction, k)?;
    let mut tail = ST_TAIL_STEPS;
    let mut notes = Vec::new();
    loop {
        let (et, st, mut warnings) = render_context(&hits, pool, tips, tail);
        let over = char_budget.is_some_and(|b| et.chars().count() + st.chars().count() > b);
        if over && hits.len() > 1 {
            let dropped = hits.pop().expect("more than one hit");
            notes.push(format!("context over budget, dropped {}", dropped.task_id));
            continue;
        }
        if over && tail > 1 {
            tail /= 2;
            notes.push(format!("context over budget, trajectories cut to {tail} steps"));
            continue;
        }
        warnings.extend(notes);
        return Ok(EpisodeContext {
            retrieved: hits,
            et,
            st,
            warnings,
        });
    }
}

/// Asks the Policy role for the next action.
pub fn plan_step(
    gw: &Gateway,
    env: &dyn Environment,
    ctx: &EpisodeContext,
    traj: &Trajectory,
) -> Result<ParsedAction, PlanError> {
    let spec = env.spec();
    let bindings = Bindings::new()
        .with("env_description", spec.description.as_str())
        .with("few_shot", spec.few_shot.as_str())
        .with("tips", or_none(&ctx.et))
        .with("similar_trajectories", or_none(&ctx.st))
        .with("trajectory", traj.render());
    let reply = gw.complete(&gw.prompts().policy, &bindings)?;
    parse_action(&reply).map_err(|e| PlanError::Unusable(e.to_string()))
}

/// Runs the reflection path after the trigger fired on the last step and
/// attaches the resulting plan to it. Returns whether a correction was made.
fn correct(gw: &Gateway, traj: &mut Trajectory, ctx: &EpisodeContext, trace: &mut Trace) -> bool {
    let step = traj.steps.len() - 1;
    let ki = match extract_key_information(gw, traj) {
        Ok(ki) => ki,
        Err(e) => {
            trace.warn(format!("step {step}: key information skipped: {e}"));
            return false;
        }
    };
    trace.push(TraceEvent::KeyInformation {
        step,
        key_information: ki.clone(),
    });
    let outcome = match reflect_key_information(gw, traj, &ki, &ctx.st) {
        Ok(o) => o,
        Err(e) => {
            trace.warn(format!("step {step}: reflection skipped: {e}"));
            return false;
        }
    };
    trace.push(TraceEvent::Reflection {
        step,
        qa: outcome.qa.clone(),
        plan: outcome.plan.clone(),
    });
    let last = traj.steps.last_mut().expect("trigger fired on a step");
    last.correction = Some(match last.correction.take() {
        Some(prev) => format!("{prev}\n{}", outcome.plan),
        None => outcome.plan.clone(),
    });
    trace.push(TraceEvent::Correction {
        step,
        plan: outcome.plan,
    });
    true
}

/// One evaluation episode. Failures of the model or environment end it as a
/// failed trajectory with `abort_reason` set.
pub fn run_episode(
    gw: &Gateway,
    env: &mut dyn Environment,
    task: &TaskSpec,
    ctx: &EpisodeContext,
    policy: &TriggerPolicy,
) -> (Trajectory, Trace) {
    let mut trace = Trace::default();
    let mut trigger = match policy.compile() {
        Ok(t) => Some(t),
        Err(e) => {
            trace.warn(format!("trigger disabled: {e}"));
            None
        }
    };
    let initial = match env.reset(task) {
        Ok(obs) => obs,
        Err(e) => {
            let mut traj = Trajectory::new(&task.id, 0, String::new());
            abort(&mut traj, &mut trace, format!("reset failed: {e}"));
            trace.push(TraceEvent::End {
                succeeded: false,
                reward: 0.0,
                steps: 0,
            });
            return (traj, trace);
        }
    };
    trace.push(TraceEvent::Reset {
        task_id: task.id.clone(),
        trial_index: 0,
        observation: initial.clone(),
    });
    trace.push(TraceEvent::Retrieval {
        hits: ctx.retrieved.clone(),
    });
    for w in &ctx.warnings {
        trace.warn(w.clone());
    }
    let mut traj = Trajectory::new(&task.id, 0, initial);
    let budget = env.spec().step_budget;

    while traj.steps.len() < budget {
        let parsed = match plan_step(gw, env, ctx, &traj) {
            Ok(p) => p,
            Err(e) => {
                abort(&mut traj, &mut trace, format!("policy failed: {e}"));
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
        if let Some(t) = trigger.as_mut() {
            if let TriggerCheck::Fired { reason } = t.check(&traj.steps) {
                trace.push(TraceEvent::Trigger { step: index, reason });
                correct(gw, &mut traj, ctx, &mut trace);
            }
        }
    }
    trace.push(TraceEvent::End {
        succeeded: traj.succeeded,
        reward: traj.reward,
        steps: traj.steps.len(),
    });
    (traj, trace)
}

/// Plain ReAct: the same loop with no retrieved context and no trigger.
pub fn run_react_baseline(gw: &Gateway, env: &mut dyn Environment, task: &TaskSpec) -> (Trajectory, Trace) {
    run_episode(gw, env, task, &EpisodeContext::empty(), &TriggerPolicy::disabled())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub task: TaskSpec,
    pub trajectory: Trajectory,
    pub trace: Trace,
}

/// Memory consulted during evaluation. `tips: None` leaves ET empty.
#[derive(Clone, Copy)]
pub struct Memory<'a> {
    pub pool: &'a ExperiencePool,
    pub index: &'a RetrievalIndex,
    pub embedder: &'a dyn Embedder,
    pub tips: Option<&'a TipsDictionary>,
}

/// Runs one episode per task, on up to `jobs` environments at a time.
/// `memory: None` runs the ReAct baseline.
pub fn evaluate(
    gw: &Gateway,
    envs: &dyn EnvFactory,
    tasks: &[TaskSpec],
    memory: Option<Memory<'_>>,
    cfg: &PlannerConfig,
    jobs: usize,
) -> Result<Vec<EpisodeRecord>, PlanError> {
    cfg.trigger.compile().map_err(PlanError::Trigger)?;
    let contexts = tasks
        .iter()
        .map(|task| match memory {
            Some(m) => assemble_context(task, m.index, m.embedder, m.pool, m.tips, cfg.k, cfg.context_char_budget),
            None => Ok(EpisodeContext::empty()),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let jobs = if gw.requires_sequential() { 1 } else { jobs };
    let records = map_with_env(tasks.len(), jobs, envs, &|i, env| {
        let (trajectory, trace) = match memory {
            Some(_) => run_episode(gw, env, &tasks[i], &contexts[i], &cfg.trigger),
            None => run_react_baseline(gw, env, &tasks[i]),
        };
        EpisodeRecord {
            task: tasks[i].clone(),
            trajectory,
            trace,
        }
    })?;
    Ok(records)
}
