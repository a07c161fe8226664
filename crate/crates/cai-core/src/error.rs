//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

/// Errors surfaced by any pipeline stage.
#[derive(Debug, Error)]
pub enum Error {
    /// Document could not be read or converted to text.
    #[error("failed to ingest {path}: {cause}")]
    Ingest { path: PathBuf, cause: String },

    /// Invalid configuration or parameters.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A chunk or document was requested that is not in the cache.
    #[error("chunk not found: doc_id={doc_id} index={index}")]
    ChunkNotFound { doc_id: String, index: usize },

    /// A document was inserted into the cache twice.
    #[error("document already cached: {0}")]
    DuplicateDocument(String),

    /// A remote or local model backend failed.
    #[error("{backend} backend error: {message}")]
    Backend {
        backend: &'static str,
        message: String,
        /// Worth retrying (network hiccup, 5xx, rate limit).
        transient: bool,
    },

    /// Extraction failed for a specific context.
    #[error("extraction failed for doc_id={doc_id} chunk={chunk_index}: {message}")]
    Extraction {
        doc_id: String,
        chunk_index: usize,
        message: String,
    },

    /// Model output could not be parsed into records.
    #[error("unparseable model output: {message}")]
    Parse { message: String, raw: String },

    /// Embedding vectors of different dimensions were compared.
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// Deduplication failed.
    #[error("dedup error: {0}")]
    Dedup(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether a retry has a chance of succeeding.
    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Backend { transient: true, .. })
    }

    pub(crate) fn backend(backend: &'static str, message: impl Into<String>, transient: bool) -> Self {
        Error::Backend {
            backend,
            message: message.into(),
            transient,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
