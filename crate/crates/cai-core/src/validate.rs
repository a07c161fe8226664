//! Normalization of raw commitments, rule-based / completeness /
//! hallucination checks, confidence scoring, and error-code assignment.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentMeta, ReportType};
use crate::error::{Error, Result};
use crate::extract::{is_answered, Boundary, RawCommitment};
use crate::text;

/// The canonical target types.
pub const TARGET_TYPES: [&str; 3] = ["absolute", "intensity", "net_zero"];

/// The five metric fields plus the three text fields of a commitment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldName {
    TargetYear,
    BaseYear,
    TargetPercent,
    TargetType,
    Scope,
    TargetWording,
    SubContext,
    EntityName,
}

impl FieldName {
    pub const METRICS: [FieldName; 5] = [
        FieldName::TargetYear,
        FieldName::BaseYear,
        FieldName::TargetPercent,
        FieldName::TargetType,
        FieldName::Scope,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FieldName::TargetYear => "target_year",
            FieldName::BaseYear => "base_year",
            FieldName::TargetPercent => "target_percent",
            FieldName::TargetType => "target_type",
            FieldName::Scope => "scope",
            FieldName::TargetWording => "target_wording",
            FieldName::SubContext => "sub_context",
            FieldName::EntityName => "entity_name",
        }
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_year" => Ok(FieldName::TargetYear),
            "base_year" => Ok(FieldName::BaseYear),
            "target_percent" => Ok(FieldName::TargetPercent),
            "target_type" => Ok(FieldName::TargetType),
            "scope" => Ok(FieldName::Scope),
            "target_wording" => Ok(FieldName::TargetWording),
            "sub_context" => Ok(FieldName::SubContext),
            "entity_name" => Ok(FieldName::EntityName),
            other => Err(Error::Config(format!("unknown field name: {other}"))),
        }
    }
}

/// One code per failed validation check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorCode {
    TargetNotAfterBase,
    YearOutOfRange,
    PercentOutOfRange,
    ScopeInvalid,
    TypeInvalid,
    MissingField(FieldName),
    Hallucinated(FieldName),
    ParseReject,
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorCode::TargetNotAfterBase => write!(f, "E_TARGET_NOT_AFTER_BASE"),
            ErrorCode::YearOutOfRange => write!(f, "E_YEAR_OUT_OF_RANGE"),
            ErrorCode::PercentOutOfRange => write!(f, "E_PERCENT_OUT_OF_RANGE"),
            ErrorCode::ScopeInvalid => write!(f, "E_SCOPE_INVALID"),
            ErrorCode::TypeInvalid => write!(f, "E_TYPE_INVALID"),
            ErrorCode::MissingField(field) => write!(f, "E_MISSING_FIELD({field})"),
            ErrorCode::Hallucinated(field) => write!(f, "E_HALLUCINATED({field})"),
            ErrorCode::ParseReject => write!(f, "E_PARSE_REJECT"),
        }
    }
}

impl FromStr for ErrorCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_field = |s: &str, prefix: &str| -> Result<FieldName> {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(')'))
                .ok_or_else(|| Error::Config(format!("unknown error code: {s}")))?
                .parse()
        };
        match s {
            "E_TARGET_NOT_AFTER_BASE" => Ok(ErrorCode::TargetNotAfterBase),
            "E_YEAR_OUT_OF_RANGE" => Ok(ErrorCode::YearOutOfRange),
            "E_PERCENT_OUT_OF_RANGE" => Ok(ErrorCode::PercentOutOfRange),
            "E_SCOPE_INVALID" => Ok(ErrorCode::ScopeInvalid),
            "E_TYPE_INVALID" => Ok(ErrorCode::TypeInvalid),
            "E_PARSE_REJECT" => Ok(ErrorCode::ParseReject),
            s if s.starts_with("E_MISSING_FIELD(") => {
                Ok(ErrorCode::MissingField(parse_field(s, "E_MISSING_FIELD(")?))
            }
            s if s.starts_with("E_HALLUCINATED(") => {
                Ok(ErrorCode::Hallucinated(parse_field(s, "E_HALLUCINATED(")?))
            }
            other => Err(Error::Config(format!("unknown error code: {other}"))),
        }
    }
}

/// A raw value that could not be parsed during normalization; kept with the
/// record for review.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseNote {
    pub field: FieldName,
    pub raw: String,
}

/// Where a record came from: the document, the center chunk, and the
/// enriched context it was extracted from.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub doc_id: String,
    pub chunk_index: usize,
    pub context: String,
    pub meta: DocumentMeta,
    pub parse_notes: Vec<ParseNote>,
}

/// A normalized commitment: parsed years and percent, canonical scope code
/// and target type, whitespace-normalized text fields.
#[derive(Debug, Clone)]
pub struct CommitmentRecord {
    pub target_year: Option<i32>,
    pub base_year: Option<i32>,
    pub target_percent: Option<f64>,
    pub target_type: Option<String>,
    pub scope: Option<String>,
    pub target_wording: Option<String>,
    pub sub_context: Option<String>,
    pub entity_name: Option<String>,
    pub provenance: Provenance,
}

/// Whether the wording describes an emission target at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionsFlag {
    Emissions,
    NonEmissions,
}

/// A validated commitment with its sub-scores, confidence, error codes, and
/// flags. `confidence` is always the mean of the three sub-scores.
#[derive(Debug, Clone)]
pub struct ScoredRecord {
    pub record: CommitmentRecord,
    pub rule_score: f64,
    pub completeness_score: f64,
    pub hallucination_score: f64,
    pub confidence: f64,
    pub error_codes: Vec<ErrorCode>,
    pub entity_match: bool,
    pub boundary: Boundary,
    pub emissions_flag: EmissionsFlag,
}

impl ScoredRecord {
    /// High confidence means a perfect score with no error codes; the
    /// high-confidence subset drives the precision/recall splits.
    pub fn is_high_confidence(&self) -> bool {
        self.confidence == 1.0 && self.error_codes.is_empty()
    }
}

/// Bounds and knobs for the validation checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    pub year_min: i32,
    pub year_max: i32,
    /// Exclusive lower bound for target_percent.
    pub percent_min: f64,
    /// Inclusive upper bound for target_percent.
    pub percent_max: f64,
    /// Two-digit fiscal years at or below this resolve to 20NN.
    pub fy_pivot: u32,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            year_min: 1990,
            year_max: 2100,
            percent_min: 0.0,
            percent_max: 100.0,
            fy_pivot: text::DEFAULT_FY_PIVOT,
        }
    }
}

static NUMBER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("number regex"));
static FOUR_DIGIT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b\d{4}\b").expect("4-digit regex"));
static FY_FIELD_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bFY\s?(\d{2})\b").expect("fy field regex"));

/// Normalize the raw extraction into typed fields.
///
/// Years parse from "YYYY" or "FYNN" forms (FY pivot at 49/50); percents have
/// "%"/"percent" stripped; scope becomes a canonical digit string; target
/// type maps to one of `TARGET_TYPES` when recognized and is kept as cleaned
/// text otherwise so the rule checks can flag it. Numeric values that cannot
/// be parsed become missing, with the raw value retained as a parse note.
pub fn normalize(raw: &RawCommitment, mut provenance: Provenance, cfg: &ValidationConfig) -> CommitmentRecord {
    let mut notes = Vec::new();

    let target_year = parse_year_field(&raw.target_year, cfg, FieldName::TargetYear, &mut notes);
    let base_year = parse_year_field(&raw.base_year, cfg, FieldName::BaseYear, &mut notes);

    let target_percent = if is_answered(&raw.target_percent) {
        match NUMBER_RE.find(&raw.target_percent) {
            Some(m) => m.as_str().parse::<f64>().ok(),
            None => None,
        }
        .or_else(|| {
            notes.push(ParseNote {
                field: FieldName::TargetPercent,
                raw: raw.target_percent.clone(),
            });
            None
        })
    } else {
        None
    };

    let target_type = if is_answered(&raw.target_type) {
        Some(normalize_target_type(&raw.target_type))
    } else {
        None
    };

    let scope = if is_answered(&raw.scope) {
        Some(
            text::canonical_scope(&raw.scope)
                .unwrap_or_else(|| text::normalize_ws_casefold(&raw.scope)),
        )
    } else {
        None
    };

    provenance.parse_notes.append(&mut notes);
    CommitmentRecord {
        target_year,
        base_year,
        target_percent,
        target_type,
        scope,
        target_wording: normalize_text_field(&raw.target_wording),
        sub_context: normalize_text_field(&raw.sub_context),
        entity_name: normalize_text_field(&raw.entity_name),
        provenance,
    }
}

fn parse_year_field(
    raw: &str,
    cfg: &ValidationConfig,
    field: FieldName,
    notes: &mut Vec<ParseNote>,
) -> Option<i32> {
    if !is_answered(raw) {
        return None;
    }
    if let Some(m) = FOUR_DIGIT_RE.find(raw) {
        return m.as_str().parse().ok();
    }
    if let Some(c) = FY_FIELD_RE.captures(raw) {
        let nn: u32 = c[1].parse().expect("two digits");
        return Some(text::fy_to_year(nn, cfg.fy_pivot));
    }
    notes.push(ParseNote {
        field,
        raw: raw.to_string(),
    });
    None
}

fn normalize_target_type(raw: &str) -> String {
    let lower = text::normalize_ws_casefold(raw);
    if ["net zero", "net-zero", "net_zero", "carbon neutral", "carbon-neutral"]
        .iter()
        .any(|kw| lower.contains(kw))
    {
        "net_zero".to_string()
    } else if lower.contains("absolute") {
        "absolute".to_string()
    } else if ["intensity", "per unit", "per revenue"]
        .iter()
        .any(|kw| lower.contains(kw))
    {
        "intensity".to_string()
    } else {
        lower
    }
}

fn normalize_text_field(raw: &str) -> Option<String> {
    if is_answered(raw) {
        Some(raw.split_whitespace().collect::<Vec<_>>().join(" "))
    } else {
        None
    }
}

impl CommitmentRecord {
    /// Render the normalized fields back into raw form. Feeding the result
    /// through `normalize` reproduces this record (idempotence).
    pub fn to_raw(&self) -> RawCommitment {
        let answer = |v: Option<String>| v.unwrap_or_else(|| crate::extract::NO_ANSWER.to_string());
        RawCommitment {
            target_year: answer(self.target_year.map(|y| y.to_string())),
            base_year: answer(self.base_year.map(|y| y.to_string())),
            target_percent: answer(self.target_percent.map(format_float)),
            target_type: answer(self.target_type.clone()),
            scope: answer(self.scope.clone()),
            target_wording: answer(self.target_wording.clone()),
            sub_context: answer(self.sub_context.clone()),
            entity_name: answer(self.entity_name.clone()),
        }
    }
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Rule-based checks. Each rule applies only when its operands are present;
/// the score is passed/applicable (1.0 when none apply) and each failed rule
/// contributes one error code.
pub fn rule_check(rec: &CommitmentRecord, cfg: &ValidationConfig) -> (f64, Vec<ErrorCode>) {
    let mut applicable = 0usize;
    let mut passed = 0usize;
    let mut codes = Vec::new();
    let mut check = |applies: bool, ok: bool, code: ErrorCode| {
        if applies {
            applicable += 1;
            if ok {
                passed += 1;
            } else {
                codes.push(code);
            }
        }
    };

    // R1: target year strictly after base year
    check(
        rec.target_year.is_some() && rec.base_year.is_some(),
        rec.target_year > rec.base_year,
        ErrorCode::TargetNotAfterBase,
    );
    // R2: present years within the configured range
    let years: Vec<i32> = [rec.target_year, rec.base_year].into_iter().flatten().collect();
    check(
        !years.is_empty(),
        years.iter().all(|y| (cfg.year_min..=cfg.year_max).contains(y)),
        ErrorCode::YearOutOfRange,
    );
    // R3: percent in (0, 100]
    check(
        rec.target_percent.is_some(),
        rec.target_percent
            .is_some_and(|p| p > cfg.percent_min && p <= cfg.percent_max),
        ErrorCode::PercentOutOfRange,
    );
    // R4: scope in the canonical set
    check(
        rec.scope.is_some(),
        rec.scope
            .as_deref()
            .is_some_and(|s| text::CANONICAL_SCOPES.contains(&s)),
        ErrorCode::ScopeInvalid,
    );
    // R5: target type in the canonical set
    check(
        rec.target_type.is_some(),
        rec.target_type
            .as_deref()
            .is_some_and(|t| TARGET_TYPES.contains(&t)),
        ErrorCode::TypeInvalid,
    );

    let score = if applicable == 0 {
        1.0
    } else {
        passed as f64 / applicable as f64
    };
    (score, codes)
}

/// Fraction of the five metric fields that are present; each missing field
/// contributes an error code.
pub fn completeness(rec: &CommitmentRecord) -> (f64, Vec<ErrorCode>) {
    let present = [
        (FieldName::TargetYear, rec.target_year.is_some()),
        (FieldName::BaseYear, rec.base_year.is_some()),
        (FieldName::TargetPercent, rec.target_percent.is_some()),
        (FieldName::TargetType, rec.target_type.is_some()),
        (FieldName::Scope, rec.scope.is_some()),
    ];
    let mut codes = Vec::new();
    let mut count = 0usize;
    for (field, is_present) in present {
        if is_present {
            count += 1;
        } else {
            codes.push(ErrorCode::MissingField(field));
        }
    }
    (count as f64 / 5.0, codes)
}

/// Lexical evidence check: every populated metric field, and the
/// sub-context, must be traceable to the enriched context. The check is
/// deliberately independent of any model so it can act as a guardrail.
pub fn hallucination(
    rec: &CommitmentRecord,
    context: &str,
    cfg: &ValidationConfig,
) -> (f64, Vec<ErrorCode>) {
    let mut populated = 0usize;
    let mut evidenced = 0usize;
    let mut codes = Vec::new();
    let mut check = |field: FieldName, value_present: bool, has_evidence: bool| {
        if value_present {
            populated += 1;
            if has_evidence {
                evidenced += 1;
            } else {
                codes.push(ErrorCode::Hallucinated(field));
            }
        }
    };

    let context_years: Vec<i32> = text::find_years(context)
        .into_iter()
        .map(|(_, y)| y)
        .chain(
            text::find_fiscal_years(context, cfg.fy_pivot)
                .into_iter()
                .map(|(_, y)| y),
        )
        .collect();

    check(
        FieldName::TargetYear,
        rec.target_year.is_some(),
        rec.target_year.is_some_and(|y| context_years.contains(&y)),
    );
    check(
        FieldName::BaseYear,
        rec.base_year.is_some(),
        rec.base_year.is_some_and(|y| context_years.contains(&y)),
    );
    check(
        FieldName::TargetPercent,
        rec.target_percent.is_some(),
        rec.target_percent.is_some_and(|p| {
            text::find_percents(context)
                .iter()
                .any(|(_, q)| (p - q).abs() < 1e-9)
        }),
    );
    check(
        FieldName::TargetType,
        rec.target_type.is_some(),
        rec.target_type
            .as_deref()
            .is_some_and(|t| type_evidenced(t, context)),
    );
    check(
        FieldName::Scope,
        rec.scope.is_some(),
        rec.scope.as_deref().is_some_and(|code| {
            text::find_scope_mentions(context).iter().any(|m| m.code == code)
        }),
    );
    check(
        FieldName::SubContext,
        rec.sub_context.is_some(),
        rec.sub_context.as_deref().is_some_and(|sub| {
            text::normalize_ws_casefold(context).contains(&text::normalize_ws_casefold(sub))
        }),
    );

    let score = if populated == 0 {
        1.0
    } else {
        evidenced as f64 / populated as f64
    };
    (score, codes)
}

pub(crate) fn type_evidenced(target_type: &str, context: &str) -> bool {
    let lower = text::normalize_ws_casefold(context);
    match target_type {
        "absolute" => lower.contains("absolute"),
        "intensity" => ["intensity", "per unit", "per revenue"]
            .iter()
            .any(|kw| lower.contains(kw)),
        "net_zero" => ["net zero", "net-zero", "carbon neutral", "carbon-neutral"]
            .iter()
            .any(|kw| lower.contains(kw)),
        other => lower.contains(other),
    }
}

/// Confidence is the unweighted mean of the three sub-scores.
pub fn combine_confidence(rule: f64, completeness: f64, hallucination: f64) -> f64 {
    (rule + completeness + hallucination) / 3.0
}

/// Auxiliary classifier outputs attached to a record during scoring.
#[derive(Debug, Clone, Copy)]
pub struct AuxFlags {
    pub entity_match: bool,
    pub boundary: Boundary,
}

/// Run all three checks against the record's own enriched context and attach
/// flags and error codes.
pub fn score(record: CommitmentRecord, flags: AuxFlags, cfg: &ValidationConfig) -> ScoredRecord {
    let (hall_score, hall_codes) = hallucination(&record, &record.provenance.context.clone(), cfg);
    rescore(record, hall_score, hall_codes, flags, cfg)
}

/// Re-run the rule and completeness checks while keeping a known
/// hallucination result; consolidation uses this after filling fields.
pub fn rescore(
    record: CommitmentRecord,
    hallucination_score: f64,
    hallucination_codes: Vec<ErrorCode>,
    flags: AuxFlags,
    cfg: &ValidationConfig,
) -> ScoredRecord {
    let (rule_score, rule_codes) = rule_check(&record, cfg);
    let (completeness_score, completeness_codes) = completeness(&record);
    let mut error_codes = rule_codes;
    error_codes.extend(completeness_codes);
    error_codes.extend(hallucination_codes);
    if !record.provenance.parse_notes.is_empty() {
        error_codes.push(ErrorCode::ParseReject);
    }
    error_codes.sort();
    error_codes.dedup();
    let emissions_flag = classify_wording(record.target_wording.as_deref().unwrap_or(""));
    ScoredRecord {
        confidence: combine_confidence(rule_score, completeness_score, hallucination_score),
        record,
        rule_score,
        completeness_score,
        hallucination_score,
        error_codes,
        entity_match: flags.entity_match,
        boundary: flags.boundary,
        emissions_flag,
    }
}

const EMISSION_WORDING_TERMS: [&str; 7] = [
    "emission", "carbon", "co2", "ghg", "net zero", "net-zero", "climate",
];

/// Emissions when the wording mentions an emission term, non-emissions
/// otherwise (so non-emission targets can be filtered out downstream).
pub fn classify_wording(target_wording: &str) -> EmissionsFlag {
    let lower = target_wording.to_lowercase();
    if EMISSION_WORDING_TERMS
        .iter()
        .any(|t| text::contains_word_prefix(&lower, t))
    {
        EmissionsFlag::Emissions
    } else {
        EmissionsFlag::NonEmissions
    }
}

/// The JSONL line format for scored records: the exact external schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub company_id: String,
    pub company_name: String,
    pub report_type: ReportType,
    pub publication_year: i32,
    pub target_year: Option<i32>,
    pub base_year: Option<i32>,
    pub target_percent: Option<f64>,
    pub target_type: Option<String>,
    pub scope: Option<String>,
    pub target_wording: Option<String>,
    pub sub_context: Option<String>,
    pub entity_name: Option<String>,
    pub rule_score: f64,
    pub completeness_score: f64,
    pub hallucination_score: f64,
    pub confidence: f64,
    pub error_codes: Vec<String>,
    pub entity_match: bool,
    pub boundary: Boundary,
    pub emissions_flag: EmissionsFlag,
    pub doc_id: String,
    pub chunk_index: usize,
}

impl From<&ScoredRecord> for OutputRecord {
    fn from(s: &ScoredRecord) -> Self {
        let r = &s.record;
        OutputRecord {
            company_id: r.provenance.meta.company_id.clone(),
            company_name: r.provenance.meta.company_name.clone(),
            report_type: r.provenance.meta.report_type,
            publication_year: r.provenance.meta.publication_year,
            target_year: r.target_year,
            base_year: r.base_year,
            target_percent: r.target_percent,
            target_type: r.target_type.clone(),
            scope: r.scope.clone(),
            target_wording: r.target_wording.clone(),
            sub_context: r.sub_context.clone(),
            entity_name: r.entity_name.clone(),
            rule_score: s.rule_score,
            completeness_score: s.completeness_score,
            hallucination_score: s.hallucination_score,
            confidence: s.confidence,
            error_codes: s.error_codes.iter().map(|c| c.to_string()).collect(),
            entity_match: s.entity_match,
            boundary: s.boundary,
            emissions_flag: s.emissions_flag,
            doc_id: r.provenance.doc_id.clone(),
            chunk_index: r.provenance.chunk_index,
        }
    }
}

impl OutputRecord {
    /// Rebuild an in-memory scored record. The enriched context and source
    /// path are not part of the external schema, so stages restarted from
    /// this file carry them as empty strings.
    pub fn into_scored(self) -> Result<ScoredRecord> {
        let error_codes: Vec<ErrorCode> = self
            .error_codes
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_>>()?;
        Ok(ScoredRecord {
            record: CommitmentRecord {
                target_year: self.target_year,
                base_year: self.base_year,
                target_percent: self.target_percent,
                target_type: self.target_type,
                scope: self.scope,
                target_wording: self.target_wording,
                sub_context: self.sub_context,
                entity_name: self.entity_name,
                provenance: Provenance {
                    doc_id: self.doc_id,
                    chunk_index: self.chunk_index,
                    context: String::new(),
                    meta: DocumentMeta {
                        company_id: self.company_id,
                        company_name: self.company_name,
                        report_type: self.report_type,
                        publication_year: self.publication_year,
                        source_path: String::new(),
                    },
                    parse_notes: Vec::new(),
                },
            },
            rule_score: self.rule_score,
            completeness_score: self.completeness_score,
            hallucination_score: self.hallucination_score,
            confidence: self.confidence,
            error_codes,
            entity_match: self.entity_match,
            boundary: self.boundary,
            emissions_flag: self.emissions_flag,
        })
    }
}
