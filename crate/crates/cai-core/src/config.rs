//! Pipeline configuration: JSON file with nested sections, defaults from the
//! reference settings, secrets only via environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relevance::LexicalConfig;
use crate::validate::ValidationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelevanceBackendKind {
    Lexical,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingBackendKind {
    Baseline,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmBackendKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    pub window_words: usize,
    pub overlap_words: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        Self {
            window_words: 80,
            overlap_words: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RelevanceConfig {
    pub backend: RelevanceBackendKind,
    /// Label threshold for remote scores; the lexical baseline carries its
    /// own threshold in `lexical`.
    pub threshold: f64,
    pub url: Option<String>,
    pub lexical: LexicalConfig,
}

impl Default for RelevanceConfig {
    fn default() -> Self {
        Self {
            backend: RelevanceBackendKind::Lexical,
            threshold: 0.5,
            url: None,
            lexical: LexicalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackendKind,
    pub dimension: usize,
    pub url: Option<String>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackendKind::Baseline,
            dimension: 1024,
            url: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub backend: LlmBackendKind,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub seed: Option<u64>,
    pub max_concurrency: usize,
    pub requests_per_minute: Option<u32>,
    pub max_input_tokens: u32,
    pub max_output_tokens: u32,
    pub url: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            backend: LlmBackendKind::Mock,
            temperature: 0.0,
            top_p: 0.0,
            top_k: 1,
            seed: None,
            max_concurrency: 4,
            requests_per_minute: None,
            max_input_tokens: 8192,
            max_output_tokens: 1024,
            url: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub k_shots: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { k_shots: 6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DedupConfig {
    pub threshold: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self { threshold: 0.95 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// External command converting a PDF to text on stdout; `{input}` in an
    /// argument is replaced with the file path.
    pub pdf_command: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub cache: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub golden: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub debug: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub cv_samples: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            cv_samples: 6,
        }
    }
}

/// Full pipeline configuration. Every section has working defaults, so an
/// empty JSON object is a valid config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chunk: ChunkConfig,
    pub relevance: RelevanceConfig,
    pub embedding: EmbeddingConfig,
    pub llm: LlmConfig,
    pub prompt: PromptConfig,
    pub dedup: DedupConfig,
    pub validate: ValidationConfig,
    pub ingest: IngestConfig,
    pub paths: PathsConfig,
    pub bench: BenchConfig,
    pub workers: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        let config: PipelineConfig = serde_json::from_str(&data)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.check()?;
        Ok(config)
    }

    /// Validate the invariants the rest of the pipeline relies on.
    pub fn check(&self) -> Result<()> {
        if self.chunk.overlap_words == 0 || self.chunk.overlap_words >= self.chunk.window_words {
            return Err(Error::Config(format!(
                "chunk: need 0 < overlap ({}) < window ({})",
                self.chunk.overlap_words, self.chunk.window_words
            )));
        }
        for (name, value) in [
            ("relevance.threshold", self.relevance.threshold),
            ("relevance.lexical.threshold", self.relevance.lexical.threshold),
            ("dedup.threshold", self.dedup.threshold),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {value}")));
            }
        }
        if self.embedding.dimension == 0 {
            return Err(Error::Config("embedding.dimension must be positive".into()));
        }
        if self.prompt.k_shots == 0 {
            return Err(Error::Config("prompt.k_shots must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolve output-file locations, with an optional output-directory
    /// override from the command line.
    pub fn resolve_paths(&self, output_override: Option<&Path>) -> ResolvedPaths {
        let output = output_override
            .map(Path::to_path_buf)
            .or_else(|| self.paths.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        ResolvedPaths {
            chunks_dir: self
                .paths
                .cache
                .clone()
                .unwrap_or_else(|| output.join("chunks")),
            documents: output.join("documents.jsonl"),
            relevance: output.join("relevance.jsonl"),
            extractions: output.join("extractions.jsonl"),
            scored: output.join("scored.jsonl"),
            finals: output.join("final.jsonl"),
            debug: self
                .paths
                .debug
                .clone()
                .unwrap_or_else(|| output.join("debug.jsonl")),
            rejects: self
                .paths
                .rejects
                .clone()
                .unwrap_or_else(|| output.join("rejects.jsonl")),
            failures: output.join("failures.jsonl"),
            report: output.join("report.json"),
            chunk_sweep: output.join("chunk_sweep.json"),
            kshot_sweep: output.join("kshot_sweep.json"),
            examples: self.paths.examples.clone(),
            golden: self.paths.golden.clone(),
            output,
        }
    }
}

/// Concrete locations of every artifact a run produces or consumes.
#[derive(Debug, Clone)]
pub struct ResolvedPaths {
    pub output: PathBuf,
    pub chunks_dir: PathBuf,
    pub documents: PathBuf,
    pub relevance: PathBuf,
    pub extractions: PathBuf,
    pub scored: PathBuf,
    pub finals: PathBuf,
    pub debug: PathBuf,
    pub rejects: PathBuf,
    pub failures: PathBuf,
    pub report: PathBuf,
    pub chunk_sweep: PathBuf,
    pub kshot_sweep: PathBuf,
    pub examples: Option<PathBuf>,
    pub golden: Option<PathBuf>,
}

/// Environment variable names for the remote backends. URLs may also come
/// from the config file; tokens only from the environment.
pub mod env_keys {
    pub const LLM_URL: &str = "CAI_LLM_URL";
    pub const LLM_TOKEN: &str = "CAI_LLM_TOKEN";
    pub const RELEVANCE_URL: &str = "CAI_RELEVANCE_URL";
    pub const RELEVANCE_TOKEN: &str = "CAI_RELEVANCE_TOKEN";
    pub const EMBED_URL: &str = "CAI_EMBED_URL";
    pub const EMBED_TOKEN: &str = "CAI_EMBED_TOKEN";
}
