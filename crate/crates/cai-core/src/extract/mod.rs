//! Metrics extraction: dynamic k-shot prompt construction, the
//! provider-agnostic LLM client, output parsing, and the two auxiliary
//! classification prompts (entity match, commitment boundary).

pub mod backend;
pub mod pattern;
pub mod prompt;
pub mod store;

pub use backend::{call_llm, LlmBackend, LlmRequest, LlmResponse, MockLlm, RemoteLlm};
pub use pattern::pattern_extract;
pub use prompt::{build_prompt, PromptSpec};
pub use store::{ExampleStore, GoldenExample};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::relevance::EnrichedContext;

/// Sentinel for attributes the model could not extract.
pub const NO_ANSWER: &str = "NO_ANSWER";

fn no_answer() -> String {
    NO_ANSWER.to_string()
}

/// A commitment exactly as the model returned it, before normalization.
/// Every key is always present; unextracted attributes hold "NO_ANSWER".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCommitment {
    #[serde(default = "no_answer")]
    pub target_year: String,
    #[serde(default = "no_answer")]
    pub base_year: String,
    #[serde(default = "no_answer")]
    pub target_percent: String,
    #[serde(default = "no_answer")]
    pub target_type: String,
    #[serde(default = "no_answer")]
    pub scope: String,
    #[serde(default = "no_answer")]
    pub target_wording: String,
    #[serde(default = "no_answer")]
    pub sub_context: String,
    #[serde(default = "no_answer")]
    pub entity_name: String,
}

impl RawCommitment {
    pub fn empty() -> Self {
        Self {
            target_year: no_answer(),
            base_year: no_answer(),
            target_percent: no_answer(),
            target_type: no_answer(),
            scope: no_answer(),
            target_wording: no_answer(),
            sub_context: no_answer(),
            entity_name: no_answer(),
        }
    }
}

/// Whether a raw field value carries an answer.
pub fn is_answered(value: &str) -> bool {
    !value.trim().is_empty() && value != NO_ANSWER
}

/// Whether a commitment applies to the whole corporation or only a subset
/// (subsidiary, country, site, business line).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    CorporateWide,
    NonCorporateWide,
}

/// Parse an LLM response into raw commitments.
///
/// Surrounding prose and Markdown code fences are stripped, then the first
/// JSON array in the text is parsed. A bare object is wrapped into a
/// one-element list. Missing keys are filled with "NO_ANSWER".
pub fn parse_output(text: &str) -> Result<Vec<RawCommitment>> {
    let cleaned = strip_code_fences(text);
    let values: Vec<serde_json::Value> = if let Some(slice) = find_json_slice(&cleaned, '[', ']') {
        serde_json::from_str(slice).map_err(|e| Error::Parse {
            message: format!("invalid JSON array: {e}"),
            raw: text.to_string(),
        })?
    } else if let Some(slice) = find_json_slice(&cleaned, '{', '}') {
        vec![serde_json::from_str(slice).map_err(|e| Error::Parse {
            message: format!("invalid JSON object: {e}"),
            raw: text.to_string(),
        })?]
    } else {
        return Err(Error::Parse {
            message: "no JSON array or object found in output".into(),
            raw: text.to_string(),
        });
    };
    values
        .into_iter()
        .map(|v| match v {
            serde_json::Value::Object(map) => Ok(raw_from_map(&map)),
            other => Err(Error::Parse {
                message: format!("array element is not an object: {other}"),
                raw: text.to_string(),
            }),
        })
        .collect()
}

fn raw_from_map(map: &serde_json::Map<String, serde_json::Value>) -> RawCommitment {
    let field = |key: &str| -> String {
        match map.get(key) {
            None | Some(serde_json::Value::Null) => no_answer(),
            Some(serde_json::Value::String(s)) if s.trim().is_empty() => no_answer(),
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            Some(serde_json::Value::Bool(b)) => b.to_string(),
            Some(other) => other.to_string(),
        }
    };
    RawCommitment {
        target_year: field("target_year"),
        base_year: field("base_year"),
        target_percent: field("target_percent"),
        target_type: field("target_type"),
        scope: field("scope"),
        target_wording: field("target_wording"),
        sub_context: field("sub_context"),
        entity_name: field("entity_name"),
    }
}

fn strip_code_fences(text: &str) -> String {
    text.lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Slice spanning the first balanced `open`..`close` region, string-aware.
fn find_json_slice(text: &str, open: char, close: char) -> Option<&str> {
    let start = text.find(open)?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            c if c == open => depth += 1,
            c if c == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Ask the backend whether the extracted entity refers to the reporting
/// company.
pub fn classify_entity_match(
    entity_name: &str,
    company_name: &str,
    llm: &dyn LlmBackend,
) -> Result<bool> {
    if company_name.trim().is_empty() {
        return Err(Error::Config("company_name must be non-empty".into()));
    }
    let req = LlmRequest::with_defaults(prompt::build_entity_match_prompt(
        entity_name,
        company_name,
    ));
    let resp = call_llm(&req, llm)?;
    match resp.text.trim().to_lowercase().split_whitespace().next() {
        Some("yes") => Ok(true),
        Some("no") => Ok(false),
        _ => Err(Error::Parse {
            message: "entity-match response was not yes/no".into(),
            raw: resp.text,
        }),
    }
}

/// Ask the backend whether the commitment is corporate-wide.
pub fn classify_boundary(
    target_wording: &str,
    sub_context: &str,
    llm: &dyn LlmBackend,
) -> Result<Boundary> {
    let req = LlmRequest::with_defaults(prompt::build_boundary_prompt(target_wording, sub_context));
    let resp = call_llm(&req, llm)?;
    match resp.text.trim().to_lowercase().split_whitespace().next() {
        Some("corporate_wide") => Ok(Boundary::CorporateWide),
        Some("non_corporate_wide") => Ok(Boundary::NonCorporateWide),
        _ => Err(Error::Parse {
            message: "boundary response was not a known label".into(),
            raw: resp.text,
        }),
    }
}

/// Model sampling parameters carried on every request.
#[derive(Debug, Clone, Copy)]
pub struct LlmParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for LlmParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            top_p: 0.0,
            top_k: 1,
            max_output_tokens: 1024,
            seed: None,
        }
    }
}

/// A raw record together with its auxiliary classifications.
#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub raw: RawCommitment,
    pub entity_match: bool,
    pub boundary: Boundary,
}

/// Runs the full extraction step for one enriched context: example
/// selection, prompt construction, the LLM call, output parsing, and the
/// auxiliary prompts per parsed record.
pub struct Extractor<'a> {
    pub store: &'a ExampleStore,
    pub llm: &'a dyn LlmBackend,
    pub embedding: &'a dyn EmbeddingBackend,
    pub k_shots: usize,
    pub params: LlmParams,
}

impl Extractor<'_> {
    pub fn extract_context(
        &self,
        ctx: &EnrichedContext,
        company_name: &str,
    ) -> Result<Vec<ExtractionOutcome>> {
        let examples = self.store.select(&ctx.text, self.k_shots, self.embedding)?;
        let spec = PromptSpec {
            instruction: prompt::DEFAULT_INSTRUCTION,
            examples,
            input_context: &ctx.text,
        };
        let mut req = LlmRequest::with_defaults(build_prompt(&spec));
        req.temperature = self.params.temperature;
        req.top_p = self.params.top_p;
        req.top_k = self.params.top_k;
        req.max_output_tokens = self.params.max_output_tokens;
        req.seed = self.params.seed;
        let resp = call_llm(&req, self.llm)?;
        let raws = parse_output(&resp.text)?;
        raws.into_iter()
            .map(|raw| {
                // A missing entity name gives no reason to doubt the record
                // refers to the reporting company.
                let entity_match = if is_answered(&raw.entity_name) {
                    classify_entity_match(&raw.entity_name, company_name, self.llm)?
                } else {
                    true
                };
                let wording = if is_answered(&raw.target_wording) {
                    raw.target_wording.as_str()
                } else {
                    ""
                };
                let sub = if is_answered(&raw.sub_context) {
                    raw.sub_context.as_str()
                } else {
                    ""
                };
                let boundary = classify_boundary(wording, sub, self.llm)?;
                Ok(ExtractionOutcome {
                    raw,
                    entity_match,
                    boundary,
                })
            })
            .collect()
    }
}
