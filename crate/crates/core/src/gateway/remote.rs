//! OpenAI-compatible chat-completions backend.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    Backend, BackendConfig, BackendFailure, BackendReply, GatewayError, GenerationRequest, RoleId,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Per-attempt timeout for the whole request.
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }

    pub fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

/// POSTs `body` as JSON, retrying transport errors, 429 and 5xx replies.
/// Returns the parsed reply and the number of attempts made.
pub fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<(Value, u32), (GatewayError, u32)> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        let mut req = agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let retryable = match req.send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if (200..300).contains(&status) {
                    return resp
                        .body_mut()
                        .read_json::<Value>()
                        .map(|v| (v, attempt))
                        .map_err(|e| (GatewayError::Response(e.to_string()), attempt));
                }
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                let message = format!("HTTP {status}: {}", truncate(&text, 200));
                if status == 429 || status >= 500 {
                    message
                } else {
                    return Err((GatewayError::Response(message), attempt));
                }
            }
            Err(e) => e.to_string(),
        };
        if attempt > policy.max_retries {
            return Err((
                GatewayError::Transport {
                    attempts: attempt,
                    message: retryable,
                },
                attempt,
            ));
        }
        tracing::warn!(url, attempt, error = %retryable, "retrying request");
        std::thread::sleep(policy.backoff(attempt));
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    api_key: Option<String>,
    default_model: Option<String>,
    models: BTreeMap<RoleId, String>,
    policy: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        default_model: Option<String>,
        models: BTreeMap<RoleId, String>,
        policy: RetryPolicy,
    ) -> Self {
        Self {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            default_model,
            models,
            agent: policy.agent(),
            policy,
        }
    }

    /// Reads the API key from the configured environment variable.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        let var = cfg.api_key_env.as_deref().unwrap_or_default();
        let key = std::env::var(var).map_err(|_| GatewayError::Config {
            field: "backend.api_key_env".into(),
            message: format!("environment variable {var} is not set"),
        })?;
        Ok(Self::new(
            cfg.base_url.as_deref().unwrap_or_default(),
            Some(key),
            cfg.model.clone(),
            cfg.models.clone(),
            cfg.retry_policy(),
        ))
    }

    fn model_for(&self, role: RoleId) -> &str {
        self.models
            .get(&role)
            .or(self.default_model.as_ref())
            .map_or("default", String::as_str)
    }
}

impl Backend for RemoteBackend {
    fn backend_id(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<BackendReply, BackendFailure> {
        let body = json!({
            "model": self.model_for(request.role),
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let started = Instant::now();
        let result = post_json(
            &self.agent,
            &self.endpoint,
            self.api_key.as_deref(),
            &body,
            &self.policy,
        );
        let latency = started.elapsed();
        match result {
            Ok((reply, attempts)) => {
                let text = reply
                    .pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .ok_or_else(|| BackendFailure {
                        error: GatewayError::Response("missing choices[0].message.content".into()),
                        latency,
                        attempts,
                    })?;
                Ok(BackendReply {
                    text: text.to_owned(),
                    latency,
                    attempts,
                })
            }
            Err((error, attempts)) => Err(BackendFailure {
                error,
                latency,
                attempts,
            }),
        }
    }
}
