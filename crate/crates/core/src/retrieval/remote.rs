//! OpenAI-compatible `/embeddings` adapter.

use serde_json::{json, Value};

use super::{EmbedError, Embedder, EmbeddingVector};
use crate::gateway::{post_json, RetryPolicy};

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dim: usize,
    policy: RetryPolicy,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    /// `dim` is the model's output size, used for the zero vector returned
    /// for text without tokens.
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, dim: usize, policy: RetryPolicy) -> Self {
        Self {
            endpoint: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.to_owned(),
            api_key,
            dim,
            agent: policy.agent(),
            policy,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.model, self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if super::tokenize(text).next().is_none() {
            return Ok(EmbeddingVector::zero(self.dim));
        }
        let body = json!({"model": self.model, "input": text});
        let (reply, _) = post_json(&self.agent, &self.endpoint, self.api_key.as_deref(), &body, &self.policy)
            .map_err(|(e, _)| EmbedError::Transport(e.to_string()))?;
        let values: Vec<f64> = reply
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbedError::Response("missing data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| EmbedError::Response("non-numeric component".into())))
            .collect::<Result<_, _>>()?;
        if values.len() != self.dim {
            return Err(EmbedError::Response(format!(
                "expected {} components, got {}",
                self.dim,
                values.len()
            )));
        }
        Ok(EmbeddingVector::normalized(values))
    }
}
