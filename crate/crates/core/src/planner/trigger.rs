//! When to stop and reflect during an episode.

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::environment::NOTHING_HAPPENS;
use crate::memory::Step;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyPattern {
    /// Observation equals this text.
    Exact(String),
    /// Observation matches this regular expression.
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerPolicy {
    pub enabled: bool,
    pub anomaly_patterns: Vec<AnomalyPattern>,
    /// Fire after this many consecutive identical (action, observation) steps.
    pub repeat_threshold: usize,
    /// Minimum number of steps between two firings.
    pub cooldown_steps: usize,
    pub max_firings: usize,
}

impl Default for TriggerPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            anomaly_patterns: vec![AnomalyPattern::Exact(NOTHING_HAPPENS.to_owned())],
            repeat_threshold: 2,
            cooldown_steps: 2,
            max_firings: 3,
        }
    }
}

impl TriggerPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// Checks thresholds and compiles the patterns.
    pub fn compile(&self) -> Result<Trigger, String> {
        for (name, v) in [
            ("repeat_threshold", self.repeat_threshold),
            ("cooldown_steps", self.cooldown_steps),
            ("max_firings", self.max_firings),
        ] {
            if v == 0 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        let matchers = self
            .anomaly_patterns
            .iter()
            .map(|p| match p {
                AnomalyPattern::Exact(s) => Ok(Matcher::Exact(s.clone())),
                AnomalyPattern::Regex(r) => Regex::new(r)
                    .map(Matcher::Regex)
                    .map_err(|e| format!("bad anomaly pattern {r:?}: {e}")),
            })
            .collect::<Result<_, _>>()?;
        Ok(Trigger {
            policy: self.clone(),
            matchers,
            fired_at: Vec::new(),
        })
    }
}

#[derive(Debug, Clone)]
enum Matcher {
    Exact(String),
    Regex(Regex),
}

impl Matcher {
    fn matches(&self, observation: &str) -> bool {
        match self {
            Matcher::Exact(s) => observation == s,
            Matcher::Regex(r) => r.is_match(observation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerCheck {
    Quiet,
    Fired { reason: String },
    /// An anomaly was seen but cooldown or the firing cap held it back.
    Suppressed { reason: String },
}

/// Trigger state for one episode.
#[derive(Debug, Clone)]
pub struct Trigger {
    policy: TriggerPolicy,
    matchers: Vec<Matcher>,
    fired_at: Vec<usize>,
}

impl Trigger {
    pub fn firings(&self) -> usize {
        self.fired_at.len()
    }

    fn anomaly(&self, steps: &[Step]) -> Option<String> {
        let last = steps.last()?;
        if self.matchers.iter().any(|m| m.matches(&last.observation)) {
            return Some(format!("anomalous observation {:?}", last.observation));
        }
        let n = self.policy.repeat_threshold;
        if steps.len() >= n {
            let tail = &steps[steps.len() - n..];
            let same = tail
                .iter()
                .all(|s| s.action == last.action && s.observation == last.observation);
            if same {
                return Some(format!("{n} identical steps of {:?}", last.action));
            }
        }
        None
    }

    /// Decides whether the latest step in `steps` fires the trigger.
    pub fn check(&mut self, steps: &[Step]) -> TriggerCheck {
        if !self.policy.enabled {
            return TriggerCheck::Quiet;
        }
        let Some(reason) = self.anomaly(steps) else {
            return TriggerCheck::Quiet;
        };
        let now = steps.len() - 1;
        if self.fired_at.len() >= self.policy.max_firings {
            return TriggerCheck::Suppressed { reason };
        }
        if let Some(&last) = self.fired_at.last() {
            if now - last < self.policy.cooldown_steps {
                return TriggerCheck::Suppressed { reason };
            }
        }
        self.fired_at.push(now);
        TriggerCheck::Fired { reason }
    }
}

/// Stateless form: does the last step of `steps` fire, given the indices of
/// earlier firings?
pub fn check_trigger(policy: &TriggerPolicy, steps: &[Step], earlier_firings: &[usize]) -> bool {
    let Ok(mut trigger) = policy.compile() else {
        return false;
    };
    trigger.fired_at = earlier_firings.to_vec();
    matches!(trigger.check(steps), TriggerCheck::Fired { .. })
}
