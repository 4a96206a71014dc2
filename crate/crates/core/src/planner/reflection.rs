//! Key-information extraction and self-questioning reflection.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::gateway::{Bindings, Gateway, GatewayError};
use crate::memory::Trajectory;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInformation {
    pub state: String,
    pub inventory: String,
    pub completed: String,
    pub pending: String,
    pub anomaly: String,
}

const HEADERS: [&str; 5] = ["State", "Inventory", "Completed", "Pending", "Anomaly"];

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s#*-]*(state|inventory|completed|pending|anomaly)[\s*]*:[\s*]*(.*)$")
        .expect("valid header pattern")
});

impl KeyInformation {
    fn section_mut(&mut self, name: &str) -> &mut String {
        match name.to_ascii_lowercase().as_str() {
            "inventory" => &mut self.inventory,
            "completed" => &mut self.completed,
            "pending" => &mut self.pending,
            "anomaly" => &mut self.anomaly,
            _ => &mut self.state,
        }
    }

    fn sections(&self) -> [&str; 5] {
        [&self.state, &self.inventory, &self.completed, &self.pending, &self.anomaly]
    }

    pub fn is_empty(&self) -> bool {
        self.sections().iter().all(|s| s.is_empty())
    }

    /// Splits `text` into sections by header lines. Text outside any known
    /// header lands in the state section. `None` for blank input.
    pub fn parse(text: &str) -> Option<Self> {
        let mut ki = Self::default();
        let mut current = "state".to_owned();
        for line in text.lines() {
            let (target, content) = match HEADER.captures(line) {
                Some(c) => {
                    current = c[1].to_ascii_lowercase();
                    (current.as_str(), c.get(2).map_or("", |m| m.as_str()))
                }
                None => (current.as_str(), line),
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let section = ki.section_mut(target);
            if !section.is_empty() {
                section.push('\n');
            }
            section.push_str(content);
        }
        (!ki.is_empty()).then_some(ki)
    }

    pub fn render(&self) -> String {
        HEADERS
            .iter()
            .zip(self.sections())
            .map(|(h, body)| format!("{h}: {}\n", if body.is_empty() { "-" } else { body }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionOutcome {
    pub qa: Vec<QaPair>,
    pub plan: String,
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^[\s#*-]*(q|question|a|answer|plan)[\s*]*:[\s*]*(.*)$").expect("valid marker pattern")
});

impl ReflectionOutcome {
    /// Reads `Q:`/`A:` pairs and the `Plan:` block, which runs to the end of
    /// the text. `None` when there is no non-empty plan.
    pub fn parse(text: &str) -> Option<Self> {
        #[derive(PartialEq)]
        enum In {
            Nothing,
            Question,
            Answer,
            Plan,
        }
        let mut qa: Vec<QaPair> = Vec::new();
        let mut plan = String::new();
        let mut at = In::Nothing;
        for line in text.lines() {
            if at == In::Plan {
                plan.push('\n');
                plan.push_str(line);
                continue;
            }
            let (content, marker) = match MARKER.captures(line) {
                Some(c) => {
                    let body = c.get(2).map_or("", |m| m.as_str()).to_owned();
                    match c[1].to_ascii_lowercase().as_str() {
                        "q" | "question" => {
                            qa.push(QaPair {
                                question: String::new(),
                                answer: String::new(),
                            });
                            at = In::Question;
                        }
                        "a" | "answer" => {
                            if qa.last().is_none_or(|p| !p.answer.is_empty()) {
                                qa.push(QaPair {
                                    question: String::new(),
                                    answer: String::new(),
                                });
                            }
                            at = In::Answer;
                        }
                        _ => at = In::Plan,
                    }
                    (body, true)
                }
                None => (line.to_owned(), false),
            };
            let content = content.trim();
            let slot = match at {
                In::Nothing => continue,
                In::Plan => &mut plan,
                In::Question => &mut qa.last_mut().expect("pair pushed").question,
                In::Answer => &mut qa.last_mut().expect("pair pushed").answer,
            };
            if content.is_empty() {
                continue;
            }
            if !slot.is_empty() && !marker {
                slot.push(' ');
            }
            slot.push_str(content);
        }
        let plan = plan.trim().to_owned();
        (!plan.is_empty()).then_some(Self { qa, plan })
    }
}

/// Asks the KIE role to summarize `traj`. An empty reply is retried once.
pub fn extract_key_information(gw: &Gateway, traj: &Trajectory) -> Result<KeyInformation, PlanError> {
    let bindings = Bindings::new().with("trajectory", traj.render());
    for _ in 0..2 {
        match gw.complete(&gw.prompts().key_info, &bindings) {
            Ok(reply) => {
                if let Some(ki) = KeyInformation::parse(&reply) {
                    return Ok(ki);
                }
            }
            Err(GatewayError::EmptyResponse(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Err(PlanError::Unusable("key information is empty after a retry".into()))
}

/// Asks the KIR role for question/answer pairs and a corrective plan. A
/// reply without a plan is retried once.
pub fn reflect_key_information(
    gw: &Gateway,
    traj: &Trajectory,
    ki: &KeyInformation,
    similar_trajectories: &str,
) -> Result<ReflectionOutcome, PlanError> {
    let bindings = Bindings::new()
        .with("trajectory", traj.render())
        .with("key_information", ki.render())
        .with("similar_trajectories", super::or_none(similar_trajectories));
    for _ in 0..2 {
        match gw.complete(&gw.prompts().key_info_reflect, &bindings) {
            Ok(reply) => {
                if let Some(outcome) = ReflectionOutcome::parse(&reply) {
                    return Ok(outcome);
                }
            }
            Err(GatewayError::EmptyResponse(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Err(PlanError::Unusable("reflection has no plan after a retry".into()))
}
