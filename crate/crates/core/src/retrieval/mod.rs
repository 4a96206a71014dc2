//! Task-instruction embedding and exact top-k retrieval over solved tasks.

mod remote;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::ExperiencePool;

pub use remote::RemoteEmbedder;

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("malformed embedding response: {0}")]
    Response(String),
    #[error("embedder {found:?} does not match the index embedder {expected:?}")]
    EmbedderMismatch { expected: String, found: String },
}

/// A unit-length vector, or the all-zero vector for text without tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub norm: f64,
}

impl EmbeddingVector {
    /// Scales `values` to unit length. All-zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = l2(&values);
        if norm == 0.0 {
            return Self { values, norm: 0.0 };
        }
        for v in &mut values {
            *v /= norm;
        }
        let norm = l2(&values);
        Self { values, norm }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            norm: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn l2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity; zero vectors are similar to nothing.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    (dot / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    /// Stable identifier recorded alongside persisted pools.
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Signed feature hashing over lowercase alphanumeric tokens.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
// second hash stream for the sign bit
const SIGN_OFFSET: u64 = FNV_OFFSET ^ 0x9e37_79b9_7f4a_7c15;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(seed, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn embed_tokens(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dim];
        for token in tokenize(text) {
            let bytes = token.as_bytes();
            let bucket = (fnv1a(FNV_OFFSET, bytes) % self.dim as u64) as usize;
            let sign = if fnv1a(SIGN_OFFSET, bytes) & 1 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        EmbeddingVector::normalized(values)
    }
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-fnv1a-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_tokens(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub task_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub task_id: String,
    pub similarity: f64,
}

/// Flat index over the instructions of solved tasks, in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    embedder_id: String,
    entries: Vec<IndexEntry>,
}

impl RetrievalIndex {
    pub fn build(pool: &ExperiencePool, embedder: &dyn Embedder) -> Result<Self, EmbedError> {
        let entries = pool
            .success_view()
            .values()
            .map(|e| {
                Ok(IndexEntry {
                    task_id: e.task.id.clone(),
                    vector: embedder.embed(&e.task.instruction)?,
                })
            })
            .collect::<Result<_, EmbedError>>()?;
        Ok(Self {
            embedder_id: embedder.id(),
            entries,
        })
    }

    pub fn from_entries(embedder_id: impl Into<String>, entries: Vec<IndexEntry>) -> Self {
        Self {
            embedder_id: embedder_id.into(),
            entries,
        }
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `k` most similar entries, highest similarity first. Ties go to
    /// the entry inserted earlier.
    pub fn query_vector(&self, query: &EmbeddingVector, k: usize) -> Vec<Hit> {
        if k == 0 {
            return Vec::new();
        }
        // max-heap on "worse", so the top is the weakest hit kept so far
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        for (position, entry) in self.entries.iter().enumerate() {
            let candidate = Ranked {
                similarity: cosine(query, &entry.vector),
                position,
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if let Some(worst) = heap.peek() {
                if candidate < *worst {
                    heap.pop();
                    heap.push(candidate);
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|r| Hit {
                task_id: self.entries[r.position].task_id.clone(),
                similarity: r.similarity,
            })
            .collect()
    }

    pub fn query_topk(
        &self,
        embedder: &dyn Embedder,
        query_text: &str,
        k: usize,
    ) -> Result<Vec<Hit>, EmbedError> {
        let found = embedder.id();
        if found != self.embedder_id {
            return Err(EmbedError::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found,
            });
        }
        Ok(self.query_vector(&embedder.embed(query_text)?, k))
    }
}

/// Orders better hits as "less": higher similarity, then earlier position.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    similarity: f64,
    position: usize,
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.position.cmp(&other.position))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}
