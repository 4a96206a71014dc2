//! Uniform access to the model roles.
//!
//! A [`Gateway`] renders a [`RolePrompt`] against its bindings, sends it to a
//! [`Backend`] and appends a [`GenerationRecord`] for every backend call,
//! successful or not.

mod parse;
mod prompt;
mod remote;
mod scripted;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_action, parse_numbered_list, ParseError, ParsedAction};
pub use prompt::{Bindings, PromptSet, RenderedPrompt, RolePrompt, PLACEHOLDERS};
pub use remote::{post_json, RemoteBackend, RetryPolicy};
pub use scripted::{parse_script, script_to_string, ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoleId {
    Focus,
    ReAct,
    Reflect,
    Tips,
    #[serde(rename = "KIE")]
    Kie,
    #[serde(rename = "KIR")]
    Kir,
    Policy,
}

impl RoleId {
    pub const ALL: [RoleId; 7] = [
        RoleId::Focus,
        RoleId::ReAct,
        RoleId::Reflect,
        RoleId::Tips,
        RoleId::Kie,
        RoleId::Kir,
        RoleId::Policy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleId::Focus => "Focus",
            RoleId::ReAct => "ReAct",
            RoleId::Reflect => "Reflect",
            RoleId::Tips => "Tips",
            RoleId::Kie => "KIE",
            RoleId::Kir => "KIR",
            RoleId::Policy => "Policy",
        }
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("template {template:?} has no binding for placeholder {{{placeholder}}}")]
    UnboundPlaceholder { template: String, placeholder: String },
    #[error("template {0:?} rendered to an empty prompt")]
    EmptyPrompt(String),
    #[error("script exhausted for role {role} at call {position}")]
    ScriptExhausted { role: RoleId, position: usize },
    #[error("scripted {role} call {position}: prompt does not contain {expected:?}")]
    ScriptExpectation {
        role: RoleId,
        position: usize,
        expected: String,
    },
    #[error("script line {line}: {message}")]
    ScriptParse { line: usize, message: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {0}")]
    Response(String),
    #[error("backend returned an empty response for role {0}")]
    EmptyResponse(RoleId),
    #[error("backend configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub role: RoleId,
    pub system: String,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f32,
}

#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub latency: Duration,
    pub attempts: u32,
}

#[derive(Debug)]
pub struct BackendFailure {
    pub error: GatewayError,
    pub latency: Duration,
    pub attempts: u32,
}

impl From<GatewayError> for BackendFailure {
    fn from(error: GatewayError) -> Self {
        Self {
            error,
            latency: Duration::ZERO,
            attempts: 1,
        }
    }
}

pub trait Backend: Send + Sync {
    fn backend_id(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, BackendFailure>;
    /// Whether calls must be issued in a fixed order to stay reproducible.
    fn requires_sequential(&self) -> bool {
        false
    }
}

/// One backend call as seen by the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub role: RoleId,
    pub template: String,
    pub rendered_prompt: String,
    pub response_text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    prompts: PromptSet,
    trace: Mutex<Vec<GenerationRecord>>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.backend_id())
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Self::with_prompts(backend, PromptSet::default())
    }

    pub fn with_prompts(backend: Box<dyn Backend>, prompts: PromptSet) -> Self {
        Self {
            backend,
            prompts,
            trace: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    pub fn backend_id(&self) -> String {
        self.backend.backend_id()
    }

    pub fn requires_sequential(&self) -> bool {
        self.backend.requires_sequential()
    }

    /// Renders `prompt` and returns the backend's non-empty response.
    pub fn complete(&self, prompt: &RolePrompt, bindings: &Bindings) -> Result<String, GatewayError> {
        let rendered = prompt.render(bindings)?;
        let request = GenerationRequest {
            role: prompt.role,
            system: rendered.system.clone(),
            user: rendered.user.clone(),
            max_tokens: prompt.max_output_tokens,
            temperature: prompt.temperature,
        };
        let outcome = self.backend.generate(&request).and_then(|reply| {
            if reply.text.trim().is_empty() {
                Err(BackendFailure {
                    error: GatewayError::EmptyResponse(prompt.role),
                    latency: reply.latency,
                    attempts: reply.attempts,
                })
            } else {
                Ok(reply)
            }
        });
        let mut record = GenerationRecord {
            role: prompt.role,
            template: prompt.name.clone(),
            rendered_prompt: rendered.combined(),
            response_text: String::new(),
            backend_id: self.backend.backend_id(),
            latency_ms: 0,
            attempt_count: 0,
            error: None,
        };
        let result = match outcome {
            Ok(reply) => {
                record.response_text = reply.text.clone();
                record.latency_ms = reply.latency.as_millis() as u64;
                record.attempt_count = reply.attempts;
                Ok(reply.text)
            }
            Err(failure) => {
                record.latency_ms = failure.latency.as_millis() as u64;
                record.attempt_count = failure.attempts;
                record.error = Some(failure.error.to_string());
                Err(failure.error)
            }
        };
        self.trace.lock().expect("trace lock").push(record);
        result
    }

    /// Removes and returns the records accumulated so far.
    pub fn drain_trace(&self) -> Vec<GenerationRecord> {
        std::mem::take(&mut *self.trace.lock().expect("trace lock"))
    }

    pub fn trace_len(&self) -> usize {
        self.trace.lock().expect("trace lock").len()
    }
}

/// Sends each role to its own backend, falling back to a default.
pub struct RoutedBackend {
    default: Box<dyn Backend>,
    routes: HashMap<RoleId, Box<dyn Backend>>,
}

impl RoutedBackend {
    pub fn new(default: Box<dyn Backend>) -> Self {
        Self {
            default,
            routes: HashMap::new(),
        }
    }

    pub fn route(mut self, role: RoleId, backend: Box<dyn Backend>) -> Self {
        self.routes.insert(role, backend);
        self
    }

    fn pick(&self, role: RoleId) -> &dyn Backend {
        self.routes.get(&role).map_or(&*self.default, |b| &**b)
    }
}

impl Backend for RoutedBackend {
    fn backend_id(&self) -> String {
        let mut roles: Vec<_> = self.routes.keys().copied().collect();
        roles.sort();
        let mut id = format!("routed({}", self.default.backend_id());
        for role in roles {
            id.push_str(&format!(",{role}={}", self.routes[&role].backend_id()));
        }
        id.push(')');
        id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, BackendFailure> {
        self.pick(request.role).generate(request)
    }

    fn requires_sequential(&self) -> bool {
        self.default.requires_sequential() || self.routes.values().any(|b| b.requires_sequential())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    /// Model used for roles without an entry in `models`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub models: BTreeMap<RoleId, String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default)]
    pub script_path: Option<PathBuf>,
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: None,
            model: None,
            models: BTreeMap::new(),
            api_key_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            initial_backoff_ms: default_backoff_ms(),
            script_path: Some(path.into()),
        }
    }

    /// Checks the fields required by `kind`. `prefix` is prepended to
    /// reported field paths.
    pub fn validate(&self, prefix: &str) -> Result<(), GatewayError> {
        let field = |name: &str| format!("{prefix}{name}");
        let missing = |name: &str| GatewayError::Config {
            field: field(name),
            message: format!("required when kind = {:?}", self.kind),
        };
        match self.kind {
            BackendKind::Scripted => {
                if self.script_path.is_none() {
                    return Err(missing("script_path"));
                }
            }
            BackendKind::Remote => {
                if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                    return Err(missing("base_url"));
                }
                if self.api_key_env.as_deref().is_none_or(|k| k.trim().is_empty()) {
                    return Err(missing("api_key_env"));
                }
                let covered = RoleId::ALL.iter().all(|r| self.models.contains_key(r));
                if self.model.is_none() && !covered {
                    return Err(missing("model"));
                }
            }
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(GatewayError::Config {
                field: field("timeout_secs"),
                message: "must be a positive number of seconds".into(),
            });
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs_f64(self.timeout_secs),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Backend>, GatewayError> {
        self.validate("backend.")?;
        match self.kind {
            BackendKind::Scripted => {
                let path = self.script_path.as_ref().expect("validated");
                Ok(Box::new(ScriptedBackend::load(path)?))
            }
            BackendKind::Remote => Ok(Box::new(RemoteBackend::from_config(self)?)),
        }
    }
}

#[cfg(test)]
pub(crate) use remote::tests::serve as remote_test_server;
