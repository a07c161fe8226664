//! Text embeddings for example selection and deduplication: a deterministic
//! hashed bag-of-words baseline plus a remote HTTP backend.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{JsonClient, RequestGovernor};

/// Default vector dimension for the baseline backend.
pub const BASELINE_DIMENSION: usize = 1024;

/// A fixed-dimension embedding. Unit L2 norm for non-empty text; the zero
/// vector stands for empty text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, clamped to [-1, 1]. Defined as 0 when either vector is
/// zero, so two empty texts are never spuriously identical.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dimension() != b.dimension() {
        return Err(Error::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Source of embeddings. Implementations must be shareable across parallel
/// document workers.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self
            .embed_batch(std::slice::from_ref(&text.to_string()))?
            .remove(0))
    }
}

/// Deterministic local embedding: lowercase, split on non-alphanumeric
/// characters, FNV-1a 64-bit hash each token into one of `dimension` buckets,
/// accumulate counts, L2-normalize.
pub struct HashedBagBackend {
    dimension: usize,
}

impl HashedBagBackend {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }
}

impl Default for HashedBagBackend {
    fn default() -> Self {
        Self::new(BASELINE_DIMENSION)
    }
}

fn fnv1a64(token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

impl EmbeddingBackend for HashedBagBackend {
    fn name(&self) -> &'static str {
        "baseline-embedding"
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut values = vec![0.0_f64; self.dimension];
                for token in text
                    .to_lowercase()
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|t| !t.is_empty())
                {
                    let bucket = (fnv1a64(token) % self.dimension as u64) as usize;
                    values[bucket] += 1.0;
                }
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in &mut values {
                        *v /= norm;
                    }
                }
                EmbeddingVector::new(values)
            })
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Remote embedding service: POST `{"texts": [...]}` and receive
/// `{"vectors": [[...], ...]}` in the same order.
pub struct RemoteEmbeddingBackend {
    client: JsonClient,
    governor: Arc<RequestGovernor>,
}

impl RemoteEmbeddingBackend {
    pub fn new(url: String, token: Option<String>, governor: Arc<RequestGovernor>) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new("embedding", url, token)?,
            governor,
        })
    }
}

impl EmbeddingBackend for RemoteEmbeddingBackend {
    fn name(&self) -> &'static str {
        "remote-embedding"
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let _permit = self.governor.acquire();
        let resp: EmbedResponse = self.client.post(&EmbedRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::backend(
                "embedding",
                format!(
                    "expected {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
                false,
            ));
        }
        Ok(resp.vectors.into_iter().map(EmbeddingVector::new).collect())
    }
}
