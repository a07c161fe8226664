//! Golden example store for dynamic prompting: vetted context/sub-context
//! pairs with their expected records, embedded at load time and selected by
//! similarity to the input context.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingBackend, EmbeddingVector};
use crate::error::{Error, Result};
use crate::extract::RawCommitment;
use crate::text::normalize_ws_casefold;

/// One vetted example. The sub-context is the fragment of the context that
/// states the commitment; its embedding drives example selection.
#[derive(Debug, Clone)]
pub struct GoldenExample {
    pub context: String,
    pub sub_context: String,
    pub expected: Vec<RawCommitment>,
    pub sub_context_embedding: EmbeddingVector,
}

/// On-disk form: one of these per JSONL line, embeddings computed at load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenExampleLine {
    pub context: String,
    pub sub_context: String,
    pub expected: Vec<RawCommitment>,
}

/// Immutable collection of golden examples. Small enough that selection is a
/// linear scan.
pub struct ExampleStore {
    examples: Vec<GoldenExample>,
}

impl ExampleStore {
    /// Load a JSONL store and embed every sub-context.
    pub fn load(path: &Path, backend: &dyn EmbeddingBackend) -> Result<Self> {
        let lines: Vec<GoldenExampleLine> = crate::jsonl::read(path)?;
        Self::from_lines(lines, backend)
    }

    pub fn from_lines(
        lines: Vec<GoldenExampleLine>,
        backend: &dyn EmbeddingBackend,
    ) -> Result<Self> {
        for (i, line) in lines.iter().enumerate() {
            if line.expected.is_empty() {
                return Err(Error::Config(format!(
                    "example {i}: expected records must be non-empty"
                )));
            }
            let ctx = normalize_ws_casefold(&line.context);
            let sub = normalize_ws_casefold(&line.sub_context);
            if !ctx.contains(&sub) {
                return Err(Error::Config(format!(
                    "example {i}: sub_context is not a substring of context"
                )));
            }
        }
        let texts: Vec<String> = lines.iter().map(|l| l.sub_context.clone()).collect();
        let embeddings = backend.embed_batch(&texts)?;
        Ok(Self {
            examples: lines
                .into_iter()
                .zip(embeddings)
                .map(|(l, e)| GoldenExample {
                    context: l.context,
                    sub_context: l.sub_context,
                    expected: l.expected,
                    sub_context_embedding: e,
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[GoldenExample] {
        &self.examples
    }

    /// A new store holding clones of the examples at `indices`, embeddings
    /// included. Used by the cross-validation sweeps.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    /// The `k` examples whose sub-context embeddings are most similar to the
    /// input context, in descending similarity order. Ties keep store order.
    /// `k` larger than the store returns the whole store.
    pub fn select(
        &self,
        context: &str,
        k: usize,
        backend: &dyn EmbeddingBackend,
    ) -> Result<Vec<&GoldenExample>> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.examples.is_empty() {
            return Err(Error::Config("example store is empty".into()));
        }
        let query = backend.embed(context)?;
        let mut ranked: Vec<(usize, f64)> = self
            .examples
            .iter()
            .enumerate()
            .map(|(i, ex)| Ok((i, cosine(&query, &ex.sub_context_embedding)?)))
            .collect::<Result<_>>()?;
        ranked.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then(ia.cmp(ib)));
        Ok(ranked
            .into_iter()
            .take(k.min(self.examples.len()))
            .map(|(i, _)| &self.examples[i])
            .collect())
    }
}
