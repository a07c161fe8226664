//! Relevance classification of chunks and enrichment of relevant chunks with
//! their neighbors (parent document retrieval).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, ChunkCache};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RequestGovernor};
use crate::text;

/// Classification label for a chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
}

/// Per-chunk classification result. `label` is `Relevant` exactly when the
/// score reached the backend's threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub doc_id: String,
    pub index: usize,
    pub score: f64,
    pub label: Label,
}

/// A relevant chunk padded with its neighboring chunks. The neighbors do not
/// need to be relevant themselves.
#[derive(Debug, Clone)]
pub struct EnrichedContext {
    pub center: Chunk,
    pub doc_id: String,
    pub center_index: usize,
    pub text: String,
}

/// Scores chunk texts in [0, 1]. Implementations must be shareable across
/// parallel document workers. Inputs here are single chunks, which the
/// chunker already bounds well under typical served-encoder window limits.
pub trait RelevanceBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// One score per text, same order.
    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>>;

    /// Scores at or above this are labeled relevant.
    fn threshold(&self) -> f64;
}

/// Classify every chunk, preserving order and cardinality. A backend failure
/// aborts the whole batch rather than silently dropping chunks.
pub fn classify_chunks(
    chunks: &[Chunk],
    backend: &dyn RelevanceBackend,
) -> Result<Vec<RelevanceResult>> {
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let scores = backend.score_batch(&texts)?;
    if scores.len() != chunks.len() {
        return Err(Error::backend(
            "relevance",
            format!("expected {} scores, got {}", chunks.len(), scores.len()),
            false,
        ));
    }
    let threshold = backend.threshold();
    Ok(chunks
        .iter()
        .zip(scores)
        .map(|(chunk, score)| RelevanceResult {
            doc_id: chunk.doc_id.clone(),
            index: chunk.index,
            score,
            label: if score >= threshold {
                Label::Relevant
            } else {
                Label::Irrelevant
            },
        })
        .collect())
}

/// Pad a relevant chunk with its previous and next chunk.
pub fn enrich(result: &RelevanceResult, cache: &ChunkCache) -> Result<EnrichedContext> {
    let center = cache
        .get(&result.doc_id, result.index)
        .ok_or_else(|| Error::ChunkNotFound {
            doc_id: result.doc_id.clone(),
            index: result.index,
        })?;
    let (prev, next) = cache.neighbors(&result.doc_id, result.index)?;
    let mut parts = Vec::with_capacity(3);
    if let Some(prev) = prev {
        parts.push(prev.text.as_str());
    }
    parts.push(center.text.as_str());
    if let Some(next) = next {
        parts.push(next.text.as_str());
    }
    Ok(EnrichedContext {
        center: center.clone(),
        doc_id: result.doc_id.clone(),
        center_index: result.index,
        text: parts.join(" "),
    })
}

/// Weights and vocabulary of the lexical baseline classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LexicalConfig {
    pub emission_terms: Vec<String>,
    pub commitment_terms: Vec<String>,
    pub emission_weight: f64,
    pub commitment_weight: f64,
    pub quantitative_weight: f64,
    pub threshold: f64,
}

impl Default for LexicalConfig {
    fn default() -> Self {
        Self {
            emission_terms: ["emission", "carbon", "ghg", "co2", "net zero", "net-zero", "scope"]
                .into_iter()
                .map(String::from)
                .collect(),
            commitment_terms: ["reduce", "target", "commit", "aim", "goal", "achieve"]
                .into_iter()
                .map(String::from)
                .collect(),
            emission_weight: 0.4,
            commitment_weight: 0.3,
            quantitative_weight: 0.3,
            threshold: 0.7,
        }
    }
}

/// Deterministic keyword classifier: scores the presence of emission
/// vocabulary, commitment vocabulary, and a quantitative pattern (a percent
/// or a four-digit year). With default weights 0.4/0.3/0.3 and threshold 0.7
/// a chunk needs the emission class plus at least one other to be relevant.
pub struct LexicalBackend {
    config: LexicalConfig,
}

impl LexicalBackend {
    pub fn new(config: LexicalConfig) -> Self {
        Self { config }
    }

    pub fn score(&self, text: &str) -> f64 {
        lexical_score(text, &self.config)
    }
}

impl Default for LexicalBackend {
    fn default() -> Self {
        Self::new(LexicalConfig::default())
    }
}

impl RelevanceBackend for LexicalBackend {
    fn name(&self) -> &'static str {
        "lexical"
    }

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        Ok(texts.iter().map(|t| self.score(t)).collect())
    }

    fn threshold(&self) -> f64 {
        self.config.threshold
    }
}

/// Pure function of the chunk text: weighted presence of the three classes.
pub fn lexical_score(text: &str, config: &LexicalConfig) -> f64 {
    let lower = text.to_lowercase();
    let mut score = 0.0;
    if config
        .emission_terms
        .iter()
        .any(|t| text::contains_word_prefix(&lower, t))
    {
        score += config.emission_weight;
    }
    if config
        .commitment_terms
        .iter()
        .any(|t| text::contains_word_prefix(&lower, t))
    {
        score += config.commitment_weight;
    }
    if !text::find_percents(&lower).is_empty() || !text::find_years(&lower).is_empty() {
        score += config.quantitative_weight;
    }
    score
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    contexts: &'a [String],
}

#[derive(Deserialize)]
struct ClassifyResponse {
    scores: Vec<f64>,
}

/// Remote classifier: POST `{"contexts": [...]}` and receive
/// `{"scores": [...]}` with one score in [0,1] per context, same order.
pub struct RemoteRelevanceBackend {
    client: JsonClient,
    governor: Arc<RequestGovernor>,
    threshold: f64,
}

impl RemoteRelevanceBackend {
    pub fn new(
        url: String,
        token: Option<String>,
        threshold: f64,
        governor: Arc<RequestGovernor>,
    ) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new("relevance", url, token)?,
            governor,
            threshold,
        })
    }
}

impl RelevanceBackend for RemoteRelevanceBackend {
    fn name(&self) -> &'static str {
        "remote-relevance"
    }

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let _permit = self.governor.acquire();
        let resp: ClassifyResponse = self.client.post(&ClassifyRequest { contexts: texts })?;
        if resp.scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::backend(
                "relevance",
                "score outside [0, 1] in response",
                false,
            ));
        }
        Ok(resp.scores)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_text, Document, DocumentMeta, ReportType};

    fn doc(text: &str) -> Document {
        Document::new(
            DocumentMeta {
                company_id: "c1".into(),
                company_name: "Acme".into(),
                report_type: ReportType::Annual,
                publication_year: 2023,
                source_path: "d.txt".into(),
            },
            text.to_string(),
        )
        .unwrap()
    }

    fn score(text: &str) -> f64 {
        lexical_score(text, &LexicalConfig::default())
    }

    #[test]
    fn lexical_score_matches_worked_cases() {
        assert!((score("reduce scope 3 emissions by 20% by 2035") - 1.0).abs() < 1e-12);
        assert_eq!(score("our cafeteria menu changed"), 0.0);
        assert!((score("carbon footprint disclosure") - 0.4).abs() < 1e-12);
        assert_eq!(score(""), 0.0);
    }

    #[test]
    fn relevance_requires_emission_plus_one_other() {
        let backend = LexicalBackend::default();
        let relevant = "we plan to reduce scope 1 and 2 emissions by 30% by 2030";
        let irrelevant = "Zero food waste for manufactured product";
        assert!(backend.score(relevant) >= backend.threshold());
        assert!(backend.score(irrelevant) < backend.threshold());
        // commitment + quantitative without emission vocabulary stays below
        assert!(backend.score("we aim to hire 30% more staff by 2030") < backend.threshold());
    }

    #[test]
    fn term_matching_is_word_prefix_based() {
        // "commit" matches "commitments" but "aim" must not match "claim"
        assert!(score("carbon commitments") > 0.4);
        assert_eq!(score("we claim nothing"), 0.0);
    }

    #[test]
    fn classify_preserves_order_and_cardinality() {
        let d = doc(
            "we plan to reduce scope 1 and 2 emissions by 30% by 2030 \
             unrelated filler sentence about cafeteria menus",
        );
        let chunks = chunk_text(&d, 10, 2).unwrap();
        let results = classify_chunks(&chunks, &LexicalBackend::default()).unwrap();
        assert_eq!(results.len(), chunks.len());
        for (r, c) in results.iter().zip(&chunks) {
            assert_eq!(r.index, c.index);
        }
    }

    #[test]
    fn empty_chunk_is_irrelevant_with_zero_score() {
        let results = classify_chunks(&[], &LexicalBackend::default()).unwrap();
        assert!(results.is_empty());
        assert_eq!(score(""), 0.0);
    }

    #[test]
    fn enrich_pads_with_neighbors() {
        let d = doc(
            &(0..200)
                .map(|i| format!("w{i}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        let chunks = chunk_text(&d, 80, 20).unwrap();
        let mut cache = ChunkCache::new();
        cache.insert_document(&d.doc_id, chunks.clone()).unwrap();

        let mid = RelevanceResult {
            doc_id: d.doc_id.clone(),
            index: 1,
            score: 1.0,
            label: Label::Relevant,
        };
        let ctx = enrich(&mid, &cache).unwrap();
        assert_eq!(
            ctx.text,
            format!("{} {} {}", chunks[0].text, chunks[1].text, chunks[2].text)
        );
        assert!(ctx.text.contains(&chunks[1].text));

        let first = RelevanceResult { index: 0, ..mid.clone() };
        let ctx = enrich(&first, &cache).unwrap();
        assert_eq!(ctx.text, format!("{} {}", chunks[0].text, chunks[1].text));

        let last = RelevanceResult { index: 2, ..mid.clone() };
        let ctx = enrich(&last, &cache).unwrap();
        assert_eq!(ctx.text, format!("{} {}", chunks[1].text, chunks[2].text));

        let missing = RelevanceResult { index: 9, ..mid };
        assert!(enrich(&missing, &cache).is_err());
    }

    #[test]
    fn enrich_single_chunk_document() {
        let d = doc("only a few words here");
        let chunks = chunk_text(&d, 80, 20).unwrap();
        let mut cache = ChunkCache::new();
        cache.insert_document(&d.doc_id, chunks.clone()).unwrap();
        let r = RelevanceResult {
            doc_id: d.doc_id.clone(),
            index: 0,
            score: 1.0,
            label: Label::Relevant,
        };
        let ctx = enrich(&r, &cache).unwrap();
        assert_eq!(ctx.text, chunks[0].text);
    }
}
