//! Per-episode event traces, written as JSON lines.

use serde::{Deserialize, Serialize};

use crate::planner::{KeyInformation, QaPair};
use crate::retrieval::Hit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Reset {
        task_id: String,
        trial_index: u32,
        observation: String,
    },
    Retrieval {
        hits: Vec<Hit>,
    },
    Step {
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        thought: Option<String>,
        action: String,
        observation: String,
        done: bool,
        reward: f64,
    },
    Trigger {
        step: usize,
        reason: String,
    },
    KeyInformation {
        step: usize,
        key_information: KeyInformation,
    },
    Reflection {
        step: usize,
        qa: Vec<QaPair>,
        plan: String,
    },
    Correction {
        step: usize,
        plan: String,
    },
    /// Self-critique written after a failed collection trial.
    TrialReflection {
        text: String,
    },
    Warning {
        message: String,
    },
    Abort {
        reason: String,
    },
    End {
        succeeded: bool,
        reward: f64,
        steps: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.events.push(TraceEvent::Warning { message });
    }

    pub fn count(&self, pred: impl Fn(&TraceEvent) -> bool) -> usize {
        self.events.iter().filter(|e| pred(e)).count()
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace event serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { events })
    }
}
