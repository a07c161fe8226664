//! Provider-agnostic LLM client: the request/response types, the
//! deterministic mock backend, the remote HTTP backend, and the retrying
//! `call_llm` entry point.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::pattern::pattern_extract;
use crate::extract::prompt::{
    BOUNDARY_TASK_MARKER, ENTITY_TASK_MARKER, INPUT_MARKER, OUTPUT_MARKER,
};
use crate::extract::Boundary;
use crate::http::{JsonClient, RequestGovernor};
use crate::text;

/// A completion request. Defaults pin the reproducible sampling settings:
/// temperature 0, top_p 0, top_k 1.
#[derive(Debug, Clone, Serialize)]
pub struct LlmRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    #[serde(rename = "max_tokens")]
    pub max_output_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl LlmRequest {
    pub fn with_defaults(prompt: String) -> Self {
        Self {
            prompt,
            temperature: 0.0,
            top_p: 0.0,
            top_k: 1,
            max_output_tokens: 1024,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct LlmResponse {
    pub text: String,
}

/// A text-completion model. Implementations must be shareable across
/// parallel document workers.
pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse>;
}

/// Send a request, retrying transient failures with exponential backoff up
/// to three attempts in total.
pub fn call_llm(req: &LlmRequest, backend: &dyn LlmBackend) -> Result<LlmResponse> {
    call_llm_with_backoff(req, backend, Duration::from_millis(200))
}

pub fn call_llm_with_backoff(
    req: &LlmRequest,
    backend: &dyn LlmBackend,
    base_delay: Duration,
) -> Result<LlmResponse> {
    let mut delay = base_delay;
    for attempt in 1..=3 {
        match backend.complete(req) {
            Ok(resp) => return Ok(resp),
            Err(err) if err.is_transient() && attempt < 3 => {
                std::thread::sleep(delay);
                delay *= 2;
            }
            Err(err) => return Err(err),
        }
    }
    unreachable!("loop always returns by attempt 3")
}

/// Deterministic local backend. The main extraction prompt is answered by
/// the formulaic-language pattern extractor; the entity-match and boundary
/// prompts are answered by fixed lexical rules.
pub struct MockLlm;

impl LlmBackend for MockLlm {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        let prompt = &req.prompt;
        let text = if prompt.starts_with(ENTITY_TASK_MARKER) {
            let entity = prompt_field(prompt, "Entity name: ");
            let company = prompt_field(prompt, "Company name: ");
            if entity_match_rule(&entity, &company) {
                "yes".to_string()
            } else {
                "no".to_string()
            }
        } else if prompt.starts_with(BOUNDARY_TASK_MARKER) {
            let sub_context = prompt_field(prompt, "Sub-context: ");
            match boundary_rule(&sub_context) {
                Boundary::CorporateWide => "corporate_wide".to_string(),
                Boundary::NonCorporateWide => "non_corporate_wide".to_string(),
            }
        } else {
            let input = last_input_section(prompt);
            serde_json::to_string(&pattern_extract(input))?
        };
        Ok(LlmResponse { text })
    }
}

/// Value of a `Key: value` line in an auxiliary prompt.
fn prompt_field(prompt: &str, key: &str) -> String {
    prompt
        .lines()
        .find_map(|line| line.strip_prefix(key))
        .unwrap_or_default()
        .trim()
        .to_string()
}

/// The text after the last `Input:` marker, with the trailing `Output:`
/// marker removed. Prompts without markers are treated as bare input.
fn last_input_section(prompt: &str) -> &str {
    let marker = format!("\n{INPUT_MARKER}\n");
    let after = match prompt.rfind(&marker) {
        Some(pos) => &prompt[pos + marker.len()..],
        None => prompt,
    };
    after
        .trim_end()
        .trim_end_matches(OUTPUT_MARKER)
        .trim_end()
}

const CORPORATE_SUFFIXES: [&str; 7] = ["inc", "corp", "corporation", "ltd", "plc", "co", "group"];

/// Case-insensitive token-set containment after dropping corporate suffixes.
pub fn entity_match_rule(entity_name: &str, company_name: &str) -> bool {
    let entity = name_tokens(entity_name);
    let company = name_tokens(company_name);
    if entity.is_empty() || company.is_empty() {
        return false;
    }
    entity.is_subset(&company) || company.is_subset(&entity)
}

fn name_tokens(name: &str) -> BTreeSet<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !CORPORATE_SUFFIXES.contains(t))
        .map(String::from)
        .collect()
}

const BOUNDARY_QUALIFIERS: [&str; 14] = [
    "subsidiary",
    "subsidiaries",
    "division",
    "facility",
    "facilities",
    "plant",
    "site",
    "branch",
    "business unit",
    "joint venture",
    "regional",
    "local market",
    "single market",
    "segment",
];

// Demonyms and region names that mark a geographic (non-corporate-wide)
// commitment.
const REGION_QUALIFIERS: [&str; 30] = [
    "german", "germany", "french", "france", "chinese", "china", "indian", "india", "japanese",
    "japan", "brazilian", "brazil", "american", "america", "canadian", "canada", "british",
    "united kingdom", "australian", "australia", "spanish", "spain", "italian", "italy",
    "mexican", "mexico", "european", "europe", "asian", "asia",
];

/// Non-corporate-wide when the sub-context mentions a subsidiary, facility,
/// region, or an "our X business" phrase; corporate-wide otherwise (absence
/// of evidence defaults to corporate-wide).
pub fn boundary_rule(sub_context: &str) -> Boundary {
    let lower = sub_context.to_lowercase();
    let qualified = BOUNDARY_QUALIFIERS
        .iter()
        .chain(REGION_QUALIFIERS.iter())
        .any(|q| text::contains_word_prefix(&lower, q))
        || our_business_phrase(&lower);
    if qualified {
        Boundary::NonCorporateWide
    } else {
        Boundary::CorporateWide
    }
}

/// "our [X] business" with a single word in between.
fn our_business_phrase(lower: &str) -> bool {
    let mut words = lower.split_whitespace().peekable();
    while let Some(w) = words.next() {
        if w == "our" {
            let mut ahead = words.clone();
            if ahead.next().is_some() && ahead.peek().is_some_and(|w| w.starts_with("business")) {
                return true;
            }
        }
    }
    false
}

#[derive(Deserialize)]
struct RemoteLlmResponse {
    text: String,
}

/// Remote completion service: POST the request JSON and receive
/// `{"text": "..."}`.
pub struct RemoteLlm {
    client: JsonClient,
    governor: Arc<RequestGovernor>,
    max_input_tokens: u32,
}

impl RemoteLlm {
    pub fn new(
        url: String,
        token: Option<String>,
        max_input_tokens: u32,
        governor: Arc<RequestGovernor>,
    ) -> Result<Self> {
        Ok(Self {
            client: JsonClient::new("llm", url, token)?,
            governor,
            max_input_tokens,
        })
    }
}

impl LlmBackend for RemoteLlm {
    fn name(&self) -> &'static str {
        "remote-llm"
    }

    fn complete(&self, req: &LlmRequest) -> Result<LlmResponse> {
        // Rough 4/3 tokens-per-word estimate; the server enforces the real cap.
        let approx_tokens = req.prompt.split_whitespace().count() * 4 / 3;
        if approx_tokens as u32 > self.max_input_tokens {
            return Err(Error::backend(
                "llm",
                format!(
                    "prompt of ~{approx_tokens} tokens exceeds max input of {}",
                    self.max_input_tokens
                ),
                false,
            ));
        }
        let _permit = self.governor.acquire();
        let resp: RemoteLlmResponse = self.client.post(req)?;
        Ok(LlmResponse { text: resp.text })
    }
}
