//! Playback backend: the n-th call for a role returns the n-th scripted
//! response for that role.
//!
//! Scripts are JSON lines of `{"role": ..., "expect": ..., "response": ...}`.
//! `expect` is optional and may be a string or a list of strings; each must
//! occur in the rendered prompt or the call fails.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};

use super::{Backend, BackendFailure, BackendReply, GatewayError, GenerationRequest, RoleId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub role: RoleId,
    #[serde(
        default,
        skip_serializing_if = "Vec::is_empty",
        deserialize_with = "one_or_many"
    )]
    pub expect: Vec<String>,
    pub response: String,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(String),
        Many(Vec<String>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

impl ScriptEntry {
    pub fn new(role: RoleId, response: impl Into<String>) -> Self {
        Self {
            role,
            expect: Vec::new(),
            response: response.into(),
        }
    }

    pub fn expecting(mut self, needle: impl Into<String>) -> Self {
        self.expect.push(needle.into());
        self
    }
}

#[derive(Debug)]
pub struct ScriptedBackend {
    by_role: HashMap<RoleId, Vec<ScriptEntry>>,
    cursors: Mutex<HashMap<RoleId, usize>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let mut by_role: HashMap<RoleId, Vec<ScriptEntry>> = HashMap::new();
        for e in entries {
            by_role.entry(e.role).or_default().push(e);
        }
        Self {
            by_role,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        Ok(Self::new(parse_script(text)?))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Responses consumed so far for `role`.
    pub fn position(&self, role: RoleId) -> usize {
        self.cursors
            .lock()
            .expect("cursor lock")
            .get(&role)
            .copied()
            .unwrap_or(0)
    }

    pub fn remaining(&self, role: RoleId) -> usize {
        self.by_role.get(&role).map_or(0, Vec::len) - self.position(role)
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptEntry>, GatewayError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| GatewayError::ScriptParse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Serializes entries in the script file format.
pub fn script_to_string(entries: &[ScriptEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("script entry serializes") + "\n")
        .collect()
}

impl Backend for ScriptedBackend {
    fn backend_id(&self) -> String {
        "scripted".into()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, BackendFailure> {
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let position = cursors.entry(request.role).or_insert(0);
        let entry = self
            .by_role
            .get(&request.role)
            .and_then(|entries| entries.get(*position))
            .ok_or(GatewayError::ScriptExhausted {
                role: request.role,
                position: *position,
            })?;
        let at = *position;
        *position += 1;
        for needle in &entry.expect {
            if !request.system.contains(needle.as_str()) && !request.user.contains(needle.as_str()) {
                return Err(GatewayError::ScriptExpectation {
                    role: request.role,
                    position: at,
                    expected: needle.clone(),
                }
                .into());
            }
        }
        Ok(BackendReply {
            text: entry.response.clone(),
            latency: Duration::ZERO,
            attempts: 1,
        })
    }

    fn requires_sequential(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(role: RoleId, user: &str) -> GenerationRequest {
        GenerationRequest {
            role,
            system: "sys".into(),
            user: user.into(),
            max_tokens: 10,
            temperature: 0.0,
        }
    }

    #[test]
    fn per_role_positions_are_independent() {
        let b = ScriptedBackend::parse(
            r#"{"role":"ReAct","response":"a1"}
{"role":"Reflect","response":"r1"}
{"role":"ReAct","response":"a2"}
"#,
        )
        .unwrap();
        assert_eq!(b.generate(&request(RoleId::ReAct, "")).unwrap().text, "a1");
        assert_eq!(b.generate(&request(RoleId::Reflect, "")).unwrap().text, "r1");
        assert_eq!(b.generate(&request(RoleId::ReAct, "")).unwrap().text, "a2");
        assert_eq!(b.remaining(RoleId::ReAct), 0);
    }

    #[test]
    fn expectations_accept_string_or_list() {
        let b = ScriptedBackend::parse(
            r#"{"role":"Focus","expect":"drawer","response":"1. x"}
{"role":"Focus","expect":["desk","lamp"],"response":"1. y"}
"#,
        )
        .unwrap();
        b.generate(&request(RoleId::Focus, "open the drawer")).unwrap();
        let err = b
            .generate(&request(RoleId::Focus, "go to desk"))
            .unwrap_err();
        match err.error {
            GatewayError::ScriptExpectation { expected, position, .. } => {
                assert_eq!(expected, "lamp");
                assert_eq!(position, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_line_is_reported() {
        let err = ScriptedBackend::parse("{\"role\":\"Focus\",\"response\":\"x\"}\n\n{oops}\n").unwrap_err();
        assert!(matches!(err, GatewayError::ScriptParse { line: 3, .. }));
        let err = ScriptedBackend::parse(r#"{"role":"Nobody","response":"x"}"#).unwrap_err();
        assert!(matches!(err, GatewayError::ScriptParse { line: 1, .. }));
    }

    #[test]
    fn script_text_round_trips() {
        let entries = vec![
            ScriptEntry::new(RoleId::Kir, "Q: a\nA: b\nPlan: c").expecting("Key information"),
            ScriptEntry::new(RoleId::Policy, "look"),
        ];
        assert_eq!(parse_script(&script_to_string(&entries)).unwrap(), entries);
    }
}
