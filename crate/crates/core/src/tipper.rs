//! Tip distillation from the experience pool, plus rewriting a dictionary
//! for another environment.
//!
//! Tasks with both outcomes get compare tips followed by supplement tips
//! from the success alone. Tasks solved on the first trial get success tips.
//! Unsolved tasks get nothing.

use thiserror::Error;

use crate::gateway::{parse_numbered_list, Bindings, Gateway, GatewayError, RolePrompt};
use crate::memory::{numbered, ExperiencePool, Tip, TipCaps, TipOrigin, TipsDictionary, Trajectory};
use crate::trace::Trace;

/// Trajectories are cut to their last this-many steps before prompting.
pub const TRAJECTORY_TAIL: usize = 40;

#[derive(Debug, Error)]
pub enum TipError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("{template}: model output has no list items after a retry")]
    Unparseable { template: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Calls `prompt` and parses a list, retrying once on unparseable output.
fn ask_list(gw: &Gateway, prompt: &RolePrompt, bindings: &Bindings) -> Result<Vec<String>, TipError> {
    for _ in 0..2 {
        let reply = gw.complete(prompt, bindings)?;
        if let Ok(items) = parse_numbered_list(&reply, usize::MAX) {
            return Ok(items);
        }
    }
    Err(TipError::Unparseable {
        template: prompt.name.clone(),
    })
}

/// Drops items already in `existing` or earlier in `items`, then caps.
fn fresh_tips(items: Vec<String>, existing: &[Tip], cap: usize, origin: TipOrigin) -> Vec<Tip> {
    let mut out: Vec<Tip> = Vec::new();
    for text in items {
        if out.len() == cap {
            break;
        }
        let seen = existing.iter().chain(&out).any(|t| t.text == text);
        if !seen {
            out.push(Tip::new(text, origin));
        }
    }
    out
}

pub fn extract_compare_tips(
    gw: &Gateway,
    success: &Trajectory,
    failures: &[&Trajectory],
    cap: usize,
) -> Result<Vec<Tip>, TipError> {
    if failures.is_empty() {
        return Err(TipError::Precondition(format!(
            "task {} has no failed trajectory to compare with",
            success.task_id
        )));
    }
    let fails: String = failures
        .iter()
        .enumerate()
        .map(|(i, t)| format!("Failed attempt {}:\n{}\n", i + 1, t.render_tail(TRAJECTORY_TAIL)))
        .collect();
    let bindings = Bindings::new()
        .with("success_trajectory", success.render_tail(TRAJECTORY_TAIL))
        .with("fail_trajectories", fails);
    let items = ask_list(gw, &gw.prompts().tips_compare, &bindings)?;
    Ok(fresh_tips(items, &[], cap, TipOrigin::Compare))
}

pub fn extract_success_supplement(
    gw: &Gateway,
    success: &Trajectory,
    existing: &[Tip],
    cap: usize,
) -> Result<Vec<Tip>, TipError> {
    if existing.is_empty() {
        return Err(TipError::Precondition(format!(
            "task {} has no tips to supplement",
            success.task_id
        )));
    }
    let bindings = Bindings::new()
        .with("success_trajectory", success.render_tail(TRAJECTORY_TAIL))
        .with("existing_tips", numbered(existing.iter().map(|t| t.text.as_str())));
    let items = ask_list(gw, &gw.prompts().tips_supplement, &bindings)?;
    Ok(fresh_tips(items, existing, cap, TipOrigin::SuccessSupplement))
}

pub fn extract_success_tips(gw: &Gateway, success: &Trajectory, cap: usize) -> Result<Vec<Tip>, TipError> {
    let bindings = Bindings::new().with("success_trajectory", success.render_tail(TRAJECTORY_TAIL));
    let items = ask_list(gw, &gw.prompts().tips_success, &bindings)?;
    Ok(fresh_tips(items, &[], cap, TipOrigin::Success))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TipsOutcome {
    pub tips: TipsDictionary,
    /// Warnings about skipped or partially built entries.
    pub trace: Trace,
}

/// Walks the pool in task order and distills tips for every solved task.
/// A task whose extraction fails is left out with a warning.
pub fn build_tips_dictionary(gw: &Gateway, pool: &ExperiencePool, caps: TipCaps, env_name: &str) -> TipsOutcome {
    let mut tips = TipsDictionary::new(env_name);
    let mut trace = Trace::default();
    for entry in pool.entries() {
        let Some(success) = entry.success() else {
            continue;
        };
        let id = &entry.task.id;
        let failures: Vec<&Trajectory> = entry.failures().collect();
        if failures.is_empty() {
            match extract_success_tips(gw, success, caps.success) {
                Ok(list) if !list.is_empty() => {
                    tips.entries.insert(id.clone(), list);
                }
                Ok(_) => trace.warn(format!("task {id}: no success tips, skipped")),
                Err(e) => trace.warn(format!("task {id}: success tips failed, skipped: {e}")),
            }
            continue;
        }
        let mut list = match extract_compare_tips(gw, success, &failures, caps.compare) {
            Ok(list) if !list.is_empty() => list,
            Ok(_) => {
                trace.warn(format!("task {id}: no compare tips, skipped"));
                continue;
            }
            Err(e) => {
                trace.warn(format!("task {id}: compare tips failed, skipped: {e}"));
                continue;
            }
        };
        match extract_success_supplement(gw, success, &list, caps.success) {
            Ok(more) => list.extend(more),
            Err(e) => trace.warn(format!("task {id}: supplement tips failed: {e}")),
        }
        tips.entries.insert(id.clone(), list);
    }
    TipsOutcome { tips, trace }
}

/// Rewrites every entry for `target_env` with one model call per task. An
/// entry whose rewrite fails or parses to nothing is kept unchanged. A
/// rewrite never grows an entry.
pub fn align_tips(
    gw: &Gateway,
    tips: &TipsDictionary,
    target_env: &str,
    target_description: &str,
) -> Result<TipsOutcome, TipError> {
    if target_description.trim().is_empty() {
        return Err(TipError::Precondition("target environment description is empty".into()));
    }
    if tips.is_empty() {
        return Err(TipError::Precondition("tips dictionary is empty".into()));
    }
    let mut out = TipsDictionary::new(target_env);
    let mut trace = Trace::default();
    for (id, entry) in &tips.entries {
        let bindings = Bindings::new()
            .with("existing_tips", numbered(entry.iter().map(|t| t.text.as_str())))
            .with("env_description", target_description);
        let rewritten = gw
            .complete(&gw.prompts().tips_align, &bindings)
            .map_err(|e| e.to_string())
            .and_then(|reply| parse_numbered_list(&reply, entry.len()).map_err(|e| e.to_string()))
            .map(|items| fresh_tips(items, &[], entry.len(), TipOrigin::Aligned));
        match rewritten {
            Ok(list) if !list.is_empty() => {
                out.entries.insert(id.clone(), list);
            }
            Ok(_) => {
                trace.warn(format!("task {id}: rewrite is empty, original kept"));
                out.entries.insert(id.clone(), entry.clone());
            }
            Err(e) => {
                trace.warn(format!("task {id}: rewrite failed, original kept: {e}"));
                out.entries.insert(id.clone(), entry.clone());
            }
        }
    }
    Ok(TipsOutcome { tips: out, trace })
}
