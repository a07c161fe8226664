//! Deterministic extraction of commitments written in formulaic
//! ("We plan to reduce [type] emissions for [scope] by [percent] by [year]
//! from base year [year]") language. This is the core of the mock LLM
//! backend. It is intentionally limited to such formulaic sentences and makes
//! no attempt at more complex language.

use regex::Regex;
use std::ops::Range;
use std::sync::LazyLock;

use crate::extract::{RawCommitment, NO_ANSWER};
use crate::text;

static REDUCTION_VERB_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(reduce|reducing|reduces|cut|cutting|cuts|lower|lowering|lowers|decrease|decreasing|decreases)\b")
        .expect("verb regex")
});

static NET_ZERO_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bnet[ -]zero\b|\bcarbon[ -]neutral\b").expect("net zero regex")
});

static TARGET_YEAR_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bby\s+((?:19|20)\d{2})\b").expect("target year regex"));

static BASE_YEAR_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bfrom\s+(?:a\s+)?(?:base\s*year\s+)?((?:19|20)\d{2}|FY\s?\d{2})\b")
        .expect("base year regex")
});

const EMISSION_TERMS: [&str; 7] = [
    "emission", "carbon", "ghg", "co2", "net zero", "net-zero", "scope",
];

/// Extract commitment records from formulaic sentences. Sentences without a
/// reduction verb or net-zero phrase, or without any emission vocabulary,
/// yield nothing. Compound clauses joined by "and" yield one record each,
/// sharing the trailing target and base years.
pub fn pattern_extract(input: &str) -> Vec<RawCommitment> {
    let mut records = Vec::new();
    for sentence in split_sentences(input) {
        extract_sentence(sentence, &mut records);
    }
    records
}

/// Maximal spans between sentence terminators.
fn split_sentences(input: &str) -> Vec<&str> {
    input
        .split(['.', '!', '?', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn extract_sentence(sentence: &str, records: &mut Vec<RawCommitment>) {
    let lower = sentence.to_lowercase();
    if !EMISSION_TERMS
        .iter()
        .any(|t| text::contains_word_prefix(&lower, t))
    {
        return;
    }
    let anchor = REDUCTION_VERB_RE
        .find(sentence)
        .map(|m| m.range())
        .or_else(|| NET_ZERO_RE.find(sentence).map(|m| m.range()));
    let Some(anchor) = anchor else {
        return;
    };

    let target_type = first_target_type(sentence);
    let scopes = text::find_scope_mentions(sentence);
    let percents = text::find_percents(sentence);
    let target_years: Vec<(Range<usize>, String)> = TARGET_YEAR_RE
        .captures_iter(sentence)
        .map(|c| (c.get(0).expect("match").range(), c[1].to_string()))
        .collect();
    let base_years: Vec<(Range<usize>, String)> = BASE_YEAR_RE
        .captures_iter(sentence)
        .map(|c| (c.get(0).expect("match").range(), normalize_fy_spacing(&c[1])))
        .collect();

    // Clause regions: one per scope mention, or a single anchored region.
    let clauses: Vec<Range<usize>> = if scopes.is_empty() {
        if percents.is_empty() && target_type.as_deref() != Some("net zero") {
            return;
        }
        vec![anchor.start..sentence.len()]
    } else {
        (0..scopes.len())
            .map(|i| {
                let start = scopes[i].range.start;
                let end = scopes
                    .get(i + 1)
                    .map_or(sentence.len(), |next| next.range.start);
                start..end
            })
            .collect()
    };

    // Years after the last clause's own values are shared by every clause
    // that lacks its own; falling back to the sentence's last mention keeps
    // that rule simple.
    let shared_target = target_years.last().map(|(_, y)| y.clone());
    let shared_base = base_years.last().map(|(_, y)| y.clone());

    for (i, region) in clauses.iter().enumerate() {
        let in_region = |r: &Range<usize>| r.start >= region.start && r.start < region.end;
        let percent = percents.iter().find(|(r, _)| in_region(r));
        let target_year = target_years
            .iter()
            .find(|(r, _)| in_region(r))
            .map(|(_, y)| y.clone())
            .or_else(|| shared_target.clone());
        let base_year = base_years
            .iter()
            .find(|(r, _)| in_region(r))
            .map(|(_, y)| y.clone())
            .or_else(|| shared_base.clone());
        let scope = scopes.get(i).map(|s| s.code.clone());

        let wording_start = if i == 0 {
            anchor.start.min(region.start)
        } else {
            region.start
        };
        let wording_end = percent
            .map(|(r, _)| r.end)
            .into_iter()
            .chain(scopes.get(i).map(|s| s.range.end))
            .chain((i == 0).then_some(anchor.end))
            .max()
            .unwrap_or(region.end)
            .max(wording_start);
        let wording = sentence[wording_start..wording_end]
            .trim()
            .trim_end_matches(|c: char| c == ',' || c.is_whitespace())
            .to_string();

        records.push(RawCommitment {
            target_year: target_year.unwrap_or_else(|| NO_ANSWER.to_string()),
            base_year: base_year.unwrap_or_else(|| NO_ANSWER.to_string()),
            target_percent: percent
                .map(|(_, p)| format_percent(*p))
                .unwrap_or_else(|| NO_ANSWER.to_string()),
            target_type: target_type.clone().unwrap_or_else(|| NO_ANSWER.to_string()),
            scope: scope.unwrap_or_else(|| NO_ANSWER.to_string()),
            target_wording: if wording.is_empty() {
                NO_ANSWER.to_string()
            } else {
                wording
            },
            sub_context: sentence.trim().to_string(),
            entity_name: NO_ANSWER.to_string(),
        });
    }
}

/// Earliest target-type keyword in the sentence.
fn first_target_type(sentence: &str) -> Option<String> {
    let lower = sentence.to_lowercase();
    let candidates: [(&str, &str); 6] = [
        ("absolute", "absolute"),
        ("intensity", "intensity"),
        ("per unit", "intensity"),
        ("per revenue", "intensity"),
        ("net zero", "net zero"),
        ("net-zero", "net zero"),
    ];
    candidates
        .iter()
        .filter_map(|(kw, ty)| lower.find(kw).map(|pos| (pos, *ty)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, ty)| ty.to_string())
}

/// "FY 20" and "fy20" both become "FY20" so downstream parsing is uniform.
fn normalize_fy_spacing(raw: &str) -> String {
    if raw.len() >= 2 && raw[..2].eq_ignore_ascii_case("fy") {
        format!("FY{}", raw[2..].trim_start())
    } else {
        raw.to_string()
    }
}

/// "30" for whole percents, "12.5" otherwise.
fn format_percent(p: f64) -> String {
    if p.fract() == 0.0 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_clause_sentence_yields_two_records() {
        let recs = pattern_extract(
            "We plan to reduce absolute scope 1 and 2 emissions by 30% and \
             scope 3 emissions by 20% by 2030 from 2015.",
        );
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].target_year, "2030");
        assert_eq!(recs[0].base_year, "2015");
        assert_eq!(recs[0].target_percent, "30");
        assert_eq!(recs[0].target_type, "absolute");
        assert_eq!(recs[0].scope, "12");
        assert_eq!(recs[1].target_year, "2030");
        assert_eq!(recs[1].base_year, "2015");
        assert_eq!(recs[1].target_percent, "20");
        assert_eq!(recs[1].target_type, "absolute");
        assert_eq!(recs[1].scope, "3");
        assert_eq!(recs[0].sub_context, recs[1].sub_context);
    }

    #[test]
    fn single_clause_template_with_base_year_phrase() {
        let recs = pattern_extract(
            "We plan to reduce absolute emissions for scope 1 and 2 by 50% by 2030 \
             from base year 2019.",
        );
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(
            (
                r.target_year.as_str(),
                r.base_year.as_str(),
                r.target_percent.as_str(),
                r.target_type.as_str(),
                r.scope.as_str(),
            ),
            ("2030", "2019", "50", "absolute", "12")
        );
        assert!(r.target_wording.contains("scope 1 and 2"));
    }

    #[test]
    fn per_clause_years_are_not_overwritten() {
        let recs = pattern_extract(
            "we will reduce Scope 1 and 2 emissions by 50% by 2030 and \
             Scope 3 emissions by 30% by 2035",
        );
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].target_year, "2030");
        assert_eq!(recs[1].target_year, "2035");
    }

    #[test]
    fn fiscal_base_year_is_kept_raw() {
        let recs = pattern_extract("reduce scope 1 and 2 emissions by 30% by 2030 from FY20");
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].base_year, "FY20");
        let recs = pattern_extract("reduce scope 3 emissions by 10% by 2030 from fy 21");
        assert_eq!(recs[0].base_year, "FY21");
    }

    #[test]
    fn net_zero_goal_without_percent() {
        let recs =
            pattern_extract("We aim to reach net zero emissions across all emissions by 2050.");
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.target_type, "net zero");
        assert_eq!(r.scope, "123");
        assert_eq!(r.target_year, "2050");
        assert_eq!(r.target_percent, NO_ANSWER);
        assert_eq!(r.base_year, NO_ANSWER);
    }

    #[test]
    fn own_operations_maps_to_scope_12() {
        let recs = pattern_extract(
            "The group commits to cut carbon emissions across its own operations by 40% by 2035 \
             from 2020.",
        );
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].scope, "12");
        assert_eq!(recs[0].target_percent, "40");
    }

    #[test]
    fn missing_scope_still_yields_a_record() {
        let recs = pattern_extract("we intend to reduce emissions by 25% by 2030");
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].scope, NO_ANSWER);
        assert_eq!(recs[0].target_percent, "25");
        assert_eq!(recs[0].target_type, NO_ANSWER);
    }

    #[test]
    fn non_commitment_text_yields_nothing() {
        assert!(pattern_extract("we improved cafeteria recycling").is_empty());
        assert!(pattern_extract("").is_empty());
        // reduction verb and percent, but nothing emission-related
        assert!(pattern_extract("we plan to reduce costs by 30% by 2030").is_empty());
        // emission vocabulary but no anchor verb or net-zero phrase
        assert!(pattern_extract("our carbon disclosure improved in 2022").is_empty());
    }

    #[test]
    fn sub_context_is_a_substring_of_the_input() {
        let input = "Filler sentence first. We plan to reduce absolute scope 1 and 2 emissions \
                     by 30% and scope 3 emissions by 20% by 2030 from 2015. More filler.";
        let recs = pattern_extract(input);
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(input.contains(&r.sub_context), "{:?}", r.sub_context);
            assert!(!r.sub_context.contains("Filler"));
        }
    }

    #[test]
    fn multiple_commitment_sentences_accumulate() {
        let input = "We plan to reduce absolute scope 1 and 2 emissions by 30% by 2030 from 2015. \
                     We also aim to reach net zero emissions across all scopes by 2050.";
        let recs = pattern_extract(input);
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].scope, "12");
        assert_eq!(recs[1].scope, "123");
        assert_eq!(recs[1].target_type, "net zero");
    }

    #[test]
    fn intensity_keyword_is_recognized() {
        let recs =
            pattern_extract("reduce carbon intensity per unit of production by 15% by 2028");
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].target_type, "intensity");
    }

    #[test]
    fn extraction_is_deterministic() {
        let input = "We plan to reduce absolute scope 1 and 2 emissions by 30% and scope 3 \
                     emissions by 20% by 2030 from 2015.";
        assert_eq!(pattern_extract(input), pattern_extract(input));
    }
}
