//! Shared lexical scanners for years, percentages, and emission-scope phrases.
//!
//! These are used by the deterministic extractor backend, by field
//! normalization, and by the hallucination evidence checks, so they live in
//! one place and behave identically everywhere.

use regex::Regex;
use std::ops::Range;
use std::sync::LazyLock;

/// Fiscal years at or below this two-digit value resolve to 20NN; above it,
/// to 19NN. Disclosure base years cluster in 1990-2049.
pub const DEFAULT_FY_PIVOT: u32 = 49;

/// Scope codes accepted by validation: single scopes and their combinations.
pub const CANONICAL_SCOPES: [&str; 7] = ["1", "2", "3", "12", "13", "23", "123"];

static YEAR_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(19|20)\d{2}\b").expect("year regex"));

static FY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bFY\s?(\d{2})\b").expect("fy regex"));

static PERCENT_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(\d{1,3}(?:\.\d+)?)\s*(?:%|percent\b|per cent\b)").expect("percent regex")
});

// "scope 1", "scopes 1 and 2", "scope 1, 2 and 3", "scope 1+2", "scope 1 & 2",
// "scope 1 and scope 2".
static SCOPE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bscopes?\s*([123](?:\s*(?:,|and|&|\+)\s*(?:scopes?\s*)?[123])*)")
        .expect("scope regex")
});

static OWN_OPS_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bown operations\b").expect("own ops regex"));

static ALL_SCOPES_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\ball (?:(?:three|3) )?scopes\b|\ball emissions\b").expect("all scopes regex")
});

/// Collapse whitespace runs to single spaces and lowercase. Used wherever two
/// texts must be compared ignoring layout and case.
pub fn normalize_ws_casefold(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Whether `term` occurs at the start of a word in the (already lowercased)
/// text, so "commit" matches "commitments" but "aim" does not match "claim".
pub fn contains_word_prefix(lower_text: &str, term: &str) -> bool {
    let term = term.to_lowercase();
    if term.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = lower_text[from..].find(&term) {
        let at = from + pos;
        let at_word_start = at == 0
            || !lower_text[..at]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric());
        if at_word_start {
            return true;
        }
        from = at + term.len();
    }
    false
}

/// Resolve a two-digit fiscal year against the pivot.
pub fn fy_to_year(nn: u32, pivot: u32) -> i32 {
    if nn <= pivot {
        2000 + nn as i32
    } else {
        1900 + nn as i32
    }
}

/// All four-digit calendar years (1900-2099) with their byte ranges.
pub fn find_years(text: &str) -> Vec<(Range<usize>, i32)> {
    YEAR_RE
        .find_iter(text)
        .map(|m| (m.range(), m.as_str().parse().expect("4-digit year")))
        .collect()
}

/// All fiscal-year mentions ("FY20", "fy 07") resolved against the pivot.
pub fn find_fiscal_years(text: &str, pivot: u32) -> Vec<(Range<usize>, i32)> {
    FY_RE
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            let nn: u32 = c[1].parse().expect("2-digit fy");
            (m.range(), fy_to_year(nn, pivot))
        })
        .collect()
}

/// All percentage mentions ("30%", "12.5 percent") with their numeric values.
pub fn find_percents(text: &str) -> Vec<(Range<usize>, f64)> {
    PERCENT_RE
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            (m.range(), c[1].parse().expect("numeric percent"))
        })
        .collect()
}

/// An emission-scope phrase found in text, with the canonical code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeMention {
    pub range: Range<usize>,
    pub code: String,
}

/// Find every scope phrase in the text. "scope 1 and 2" yields one mention
/// with code "12"; "own operations" maps to "12"; "all scopes" and
/// "all emissions" map to "123".
pub fn find_scope_mentions(text: &str) -> Vec<ScopeMention> {
    let mut out: Vec<ScopeMention> = SCOPE_RE
        .captures_iter(text)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            ScopeMention {
                range: m.range(),
                code: digits_to_scope_code(m.as_str()),
            }
        })
        .collect();
    for m in OWN_OPS_RE.find_iter(text) {
        out.push(ScopeMention {
            range: m.range(),
            code: "12".to_string(),
        });
    }
    for m in ALL_SCOPES_RE.find_iter(text) {
        out.push(ScopeMention {
            range: m.range(),
            code: "123".to_string(),
        });
    }
    out.sort_by_key(|m| m.range.start);
    out
}

/// Map a raw scope field value to its canonical digit-string form.
///
/// Recognized phrases ("own operations", "all scopes", "all emissions") map
/// to their codes. Otherwise every digit in the value is kept, deduplicated,
/// and sorted, so "scope 2 and 1" becomes "12". The result is not guaranteed
/// to be a valid code ("scope 4" yields "4"); rule checks reject those.
/// Returns None when nothing scope-like can be read from the value.
pub fn canonical_scope(raw: &str) -> Option<String> {
    if OWN_OPS_RE.is_match(raw) {
        return Some("12".to_string());
    }
    if ALL_SCOPES_RE.is_match(raw) {
        return Some("123".to_string());
    }
    let code = digits_to_scope_code(raw);
    if code.is_empty() {
        None
    } else {
        Some(code)
    }
}

/// Deduplicate and sort the digits appearing in a string.
fn digits_to_scope_code(s: &str) -> String {
    let mut digits: Vec<char> = s.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.sort_unstable();
    digits.dedup();
    digits.into_iter().collect()
}
