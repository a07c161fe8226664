//! Evaluation against golden datasets: document-level accuracy / recall /
//! precision with high-confidence splits, plus the chunk-size and k-shot
//! sensitivity sweeps.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{chunk_text, Document};
use crate::embedding::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::extract::{
    build_prompt, call_llm, parse_output, prompt, ExampleStore, LlmBackend, LlmParams, LlmRequest,
    PromptSpec, RawCommitment,
};
use crate::relevance::{classify_chunks, Label, RelevanceBackend};
use crate::text;
use crate::validate::{normalize, Provenance, ScoredRecord, ValidationConfig};

/// A verified benchmark commitment: the five normalized metric fields plus
/// where it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenCommitment {
    pub company_id: String,
    pub doc_id: String,
    pub target_year: Option<i32>,
    pub base_year: Option<i32>,
    pub target_percent: Option<f64>,
    pub target_type: Option<String>,
    pub scope: Option<String>,
}

/// Hashable identity of a commitment: the five metric fields. Percent is
/// carried as its canonical decimal rendering so 30 and 30.0 compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetricKey {
    pub target_year: Option<i32>,
    pub base_year: Option<i32>,
    pub target_percent: Option<String>,
    pub target_type: Option<String>,
    pub scope: Option<String>,
}

fn format_percent(p: f64) -> String {
    format!("{p}")
}

impl MetricKey {
    pub fn from_scored(rec: &ScoredRecord) -> Self {
        MetricKey {
            target_year: rec.record.target_year,
            base_year: rec.record.base_year,
            target_percent: rec.record.target_percent.map(format_percent),
            target_type: rec.record.target_type.clone(),
            scope: rec.record.scope.clone(),
        }
    }

    pub fn from_golden(g: &GoldenCommitment) -> Self {
        MetricKey {
            target_year: g.target_year,
            base_year: g.base_year,
            target_percent: g.target_percent.map(format_percent),
            target_type: g.target_type.clone(),
            scope: g.scope.clone(),
        }
    }
}

/// Greedy order-stable matching on exact five-field equality. Each golden
/// record matches at most one prediction and vice versa.
pub fn match_records(golden: &[MetricKey], predicted: &[MetricKey]) -> Vec<(usize, usize)> {
    let mut used = vec![false; predicted.len()];
    let mut pairs = Vec::new();
    for (gi, g) in golden.iter().enumerate() {
        if let Some(pi) = predicted
            .iter()
            .enumerate()
            .position(|(pi, p)| !used[pi] && p == g)
        {
            used[pi] = true;
            pairs.push((gi, pi));
        }
    }
    pairs
}

/// Document-level metrics. Rates are `None` when their denominator is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocReport {
    pub doc_id: String,
    pub golden_count: usize,
    pub predicted_count: usize,
    pub matched: usize,
    pub high_conf_count: usize,
    pub matched_high_conf: usize,
    pub accuracy: Option<f64>,
    pub total_recall: Option<f64>,
    pub precision: Option<f64>,
    pub high_conf_recall: Option<f64>,
    pub high_conf_precision: Option<f64>,
}

impl DocReport {
    fn from_counts(
        doc_id: String,
        golden_count: usize,
        predicted_count: usize,
        matched: usize,
        high_conf_count: usize,
        matched_high_conf: usize,
    ) -> Self {
        let rate = |num: usize, den: usize| -> Option<f64> {
            if den == 0 {
                None
            } else {
                Some(num as f64 / den as f64)
            }
        };
        DocReport {
            doc_id,
            golden_count,
            predicted_count,
            matched,
            high_conf_count,
            matched_high_conf,
            // accuracy shares the recall formula; the distinction is not
            // well-defined for set comparison, so both are reported under
            // one definition
            accuracy: rate(matched, golden_count),
            total_recall: rate(matched, golden_count),
            precision: rate(matched, predicted_count),
            high_conf_recall: rate(matched_high_conf, golden_count),
            high_conf_precision: rate(matched_high_conf, high_conf_count),
        }
    }
}

/// Metrics for one document. `predicted` pairs each prediction with its
/// high-confidence flag; the high-confidence subset must be a subset of the
/// predictions by construction.
pub fn doc_metrics(
    doc_id: &str,
    golden: &[MetricKey],
    predicted: &[(MetricKey, bool)],
) -> DocReport {
    let keys: Vec<MetricKey> = predicted.iter().map(|(k, _)| k.clone()).collect();
    let pairs = match_records(golden, &keys);
    let matched_high_conf = pairs.iter().filter(|(_, pi)| predicted[*pi].1).count();
    let high_conf_count = predicted.iter().filter(|(_, hc)| *hc).count();
    DocReport::from_counts(
        doc_id.to_string(),
        golden.len(),
        keys.len(),
        pairs.len(),
        high_conf_count,
        matched_high_conf,
    )
}

/// Per-document rows plus micro-averaged aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub docs: Vec<DocReport>,
    pub aggregate: DocReport,
}

/// Evaluate final records against the golden dataset, grouping both sides by
/// doc_id. Aggregates are micro-averaged and invariant to document order.
pub fn evaluate(goldens: &[GoldenCommitment], records: &[ScoredRecord]) -> EvalReport {
    let mut golden_by_doc: BTreeMap<&str, Vec<MetricKey>> = BTreeMap::new();
    for g in goldens {
        golden_by_doc
            .entry(g.doc_id.as_str())
            .or_default()
            .push(MetricKey::from_golden(g));
    }
    let mut predicted_by_doc: BTreeMap<&str, Vec<(MetricKey, bool)>> = BTreeMap::new();
    for r in records {
        predicted_by_doc
            .entry(r.record.provenance.doc_id.as_str())
            .or_default()
            .push((MetricKey::from_scored(r), r.is_high_confidence()));
    }

    let mut doc_ids: Vec<&str> = golden_by_doc
        .keys()
        .chain(predicted_by_doc.keys())
        .copied()
        .collect();
    doc_ids.sort_unstable();
    doc_ids.dedup();

    static EMPTY_G: Vec<MetricKey> = Vec::new();
    let empty_p: Vec<(MetricKey, bool)> = Vec::new();
    let docs: Vec<DocReport> = doc_ids
        .iter()
        .map(|doc_id| {
            let g = golden_by_doc.get(doc_id).unwrap_or(&EMPTY_G);
            let p = predicted_by_doc.get(doc_id).unwrap_or(&empty_p);
            doc_metrics(doc_id, g, p)
        })
        .collect();

    let sum = |f: fn(&DocReport) -> usize| docs.iter().map(f).sum();
    let aggregate = DocReport::from_counts(
        "aggregate".to_string(),
        sum(|d| d.golden_count),
        sum(|d| d.predicted_count),
        sum(|d| d.matched),
        sum(|d| d.high_conf_count),
        sum(|d| d.matched_high_conf),
    );
    EvalReport { docs, aggregate }
}

/// Plain-text table of an evaluation report.
pub fn render_table(report: &EvalReport) -> String {
    fn pct(v: Option<f64>) -> String {
        match v {
            Some(v) => format!("{:.1}%", v * 100.0),
            None => "-".to_string(),
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>6} {:>6} {:>7} {:>8} {:>9} {:>9} {:>9}\n",
        "doc_id", "golden", "pred", "matched", "recall", "precision", "hc_rec", "hc_prec"
    ));
    for d in report.docs.iter().chain(std::iter::once(&report.aggregate)) {
        out.push_str(&format!(
            "{:<24} {:>6} {:>6} {:>7} {:>8} {:>9} {:>9} {:>9}\n",
            d.doc_id,
            d.golden_count,
            d.predicted_count,
            d.matched,
            pct(d.total_recall),
            pct(d.precision),
            pct(d.high_conf_recall),
            pct(d.high_conf_precision),
        ));
    }
    out
}

/// One row of the chunk-size sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChunkSweepRow {
    pub window_words: usize,
    pub overlap_words: usize,
    pub covered: usize,
    pub total: usize,
    pub recall: Option<f64>,
}

/// For each window size (overlap fixed at a quarter of the window), the
/// fraction of golden commitments whose metric values all appear within at
/// least one chunk labeled relevant.
pub fn sweep_chunk_size(
    docs: &[Document],
    goldens: &[GoldenCommitment],
    sizes: &[usize],
    backend: &dyn RelevanceBackend,
    cfg: &ValidationConfig,
) -> Result<Vec<ChunkSweepRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let overlap = size / 4;
        let mut covered = 0usize;
        for doc in docs {
            let doc_goldens: Vec<&GoldenCommitment> =
                goldens.iter().filter(|g| g.doc_id == doc.doc_id).collect();
            if doc_goldens.is_empty() {
                continue;
            }
            let chunks = chunk_text(doc, size, overlap)?;
            let results = classify_chunks(&chunks, backend)?;
            let relevant_texts: Vec<&str> = results
                .iter()
                .filter(|r| r.label == Label::Relevant)
                .map(|r| chunks[r.index].text.as_str())
                .collect();
            for golden in doc_goldens {
                if relevant_texts
                    .iter()
                    .any(|text| golden_contained(golden, text, cfg))
                {
                    covered += 1;
                }
            }
        }
        let total = goldens.len();
        rows.push(ChunkSweepRow {
            window_words: size,
            overlap_words: overlap,
            covered,
            total,
            recall: if total == 0 {
                None
            } else {
                Some(covered as f64 / total as f64)
            },
        });
    }
    Ok(rows)
}

/// All present metric values of the golden commitment are evidenced in the
/// text, using the same lexical matching as the hallucination check.
pub fn golden_contained(golden: &GoldenCommitment, chunk_text: &str, cfg: &ValidationConfig) -> bool {
    let years: Vec<i32> = text::find_years(chunk_text)
        .into_iter()
        .map(|(_, y)| y)
        .chain(
            text::find_fiscal_years(chunk_text, cfg.fy_pivot)
                .into_iter()
                .map(|(_, y)| y),
        )
        .collect();
    if let Some(y) = golden.target_year {
        if !years.contains(&y) {
            return false;
        }
    }
    if let Some(y) = golden.base_year {
        if !years.contains(&y) {
            return false;
        }
    }
    if let Some(p) = golden.target_percent {
        if !text::find_percents(chunk_text)
            .iter()
            .any(|(_, q)| (p - q).abs() < 1e-9)
        {
            return false;
        }
    }
    if let Some(t) = &golden.target_type {
        if !crate::validate::type_evidenced(t, chunk_text) {
            return false;
        }
    }
    if let Some(code) = &golden.scope {
        if !text::find_scope_mentions(chunk_text)
            .iter()
            .any(|m| &m.code == code)
        {
            return false;
        }
    }
    true
}

/// One row of the k-shot sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KshotRow {
    pub k: usize,
    pub samples: usize,
    pub mean_recall: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

/// K-shot sweep outcome; `aborted` carries the backend failure message when
/// the sweep stopped early, with the completed rows kept.
#[derive(Debug)]
pub struct KshotSweep {
    pub rows: Vec<KshotRow>,
    pub aborted: Option<String>,
}

/// For each k, run seeded cross-validation: split the store 70/30 grouped by
/// context, prompt each test context with k examples selected from the train
/// side, and score the parses against the expected records.
pub fn sweep_kshot(
    store: &ExampleStore,
    k_range: RangeInclusive<usize>,
    cv_samples: usize,
    seed: u64,
    llm: &dyn LlmBackend,
    embedding: &dyn EmbeddingBackend,
    params: LlmParams,
    cfg: &ValidationConfig,
) -> Result<KshotSweep> {
    let splits = grouped_splits(store, cv_samples, seed)?;
    let mut rows = Vec::new();
    for k in k_range {
        let mut recalls = Vec::with_capacity(splits.len());
        for (train_idx, test_idx) in &splits {
            let train = store.subset(train_idx);
            let mut expected_total = 0usize;
            let mut matched_total = 0usize;
            for &ti in test_idx {
                let example = &store.examples()[ti];
                let selected = train.select(&example.context, k, embedding)?;
                let spec = PromptSpec {
                    instruction: prompt::DEFAULT_INSTRUCTION,
                    examples: selected,
                    input_context: &example.context,
                };
                let mut req = LlmRequest::with_defaults(build_prompt(&spec));
                req.temperature = params.temperature;
                req.top_p = params.top_p;
                req.top_k = params.top_k;
                req.max_output_tokens = params.max_output_tokens;
                req.seed = params.seed;
                let resp = match call_llm(&req, llm) {
                    Ok(resp) => resp,
                    Err(e @ Error::Backend { .. }) => {
                        return Ok(KshotSweep {
                            rows,
                            aborted: Some(e.to_string()),
                        })
                    }
                    Err(e) => return Err(e),
                };
                let parsed = match parse_output(&resp.text) {
                    Ok(parsed) => parsed,
                    Err(_) => Vec::new(), // unparseable output scores zero
                };
                let expected_keys = normalize_to_keys(&example.expected, cfg);
                let parsed_keys = normalize_to_keys(&parsed, cfg);
                matched_total += match_records(&expected_keys, &parsed_keys).len();
                expected_total += expected_keys.len();
            }
            if expected_total > 0 {
                recalls.push(matched_total as f64 / expected_total as f64);
            }
        }
        let mean = if recalls.is_empty() {
            None
        } else {
            Some(recalls.iter().sum::<f64>() / recalls.len() as f64)
        };
        rows.push(KshotRow {
            k,
            samples: splits.len(),
            mean_recall: mean,
            mean_accuracy: mean,
        });
    }
    Ok(KshotSweep {
        rows,
        aborted: None,
    })
}

fn normalize_to_keys(raws: &[RawCommitment], cfg: &ValidationConfig) -> Vec<MetricKey> {
    raws.iter()
        .map(|raw| {
            let rec = normalize(raw, empty_provenance(), cfg);
            MetricKey {
                target_year: rec.target_year,
                base_year: rec.base_year,
                target_percent: rec.target_percent.map(format_percent),
                target_type: rec.target_type,
                scope: rec.scope,
            }
        })
        .collect()
}

fn empty_provenance() -> Provenance {
    Provenance {
        doc_id: String::new(),
        chunk_index: 0,
        context: String::new(),
        meta: crate::corpus::DocumentMeta {
            company_id: "-".into(),
            company_name: String::new(),
            report_type: crate::corpus::ReportType::Sustainability,
            publication_year: 2000,
            source_path: String::new(),
        },
        parse_notes: Vec::new(),
    }
}

/// Seeded 70/30 splits of example indices, grouped so examples sharing a
/// context never straddle the split. The same seed always produces the same
/// splits, independent of k.
fn grouped_splits(
    store: &ExampleStore,
    cv_samples: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let mut by_context: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in store.examples().iter().enumerate() {
        by_context.entry(ex.context.as_str()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_context.into_values().collect();
    if groups.len() < 2 {
        return Err(Error::Config(
            "k-shot sweep needs at least 2 distinct contexts in the example store".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Vec::with_capacity(cv_samples);
    for _ in 0..cv_samples {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut rng);
        let train_groups = ((groups.len() as f64 * 0.7).round() as usize)
            .clamp(1, groups.len() - 1);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (pos, &gi) in order.iter().enumerate() {
            if pos < train_groups {
                train.extend(&groups[gi]);
            } else {
                test.extend(&groups[gi]);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        splits.push((train, test));
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: i32) -> MetricKey {
        MetricKey {
            target_year: Some(2030),
            base_year: Some(2015),
            target_percent: Some(format!("{n}")),
            target_type: Some("absolute".into()),
            scope: Some("12".into()),
        }
    }

    #[test]
    fn worked_document_example() {
        // golden {A,B,C,D,E} vs predicted {A,B,C,E,F}
        let golden: Vec<MetricKey> = [1, 2, 3, 4, 5].iter().map(|&n| key(n)).collect();
        let predicted: Vec<(MetricKey, bool)> = [1, 2, 3, 5, 6]
            .iter()
            .map(|&n| (key(n), n <= 3)) // {A,B,C} are high confidence
            .collect();
        let report = doc_metrics("doc", &golden, &predicted);
        assert_eq!(report.matched, 4);
        assert_eq!(report.accuracy, Some(0.8));
        assert_eq!(report.total_recall, Some(0.8));
        assert_eq!(report.precision, Some(0.8));
        assert_eq!(report.high_conf_precision, Some(1.0));
        assert_eq!(report.high_conf_recall, Some(0.6));
    }

    #[test]
    fn identical_and_disjoint_sets() {
        let golden: Vec<MetricKey> = [1, 2, 3].iter().map(|&n| key(n)).collect();
        let same: Vec<(MetricKey, bool)> = golden.iter().map(|k| (k.clone(), false)).collect();
        let report = doc_metrics("doc", &golden, &same);
        assert_eq!(report.matched, 3);
        assert_eq!(report.total_recall, Some(1.0));

        let disjoint: Vec<(MetricKey, bool)> = [7, 8].iter().map(|&n| (key(n), false)).collect();
        let report = doc_metrics("doc", &golden, &disjoint);
        assert_eq!(report.matched, 0);
        assert_eq!(report.precision, Some(0.0));
    }

    #[test]
    fn empty_sides_give_null_rates() {
        let report = doc_metrics("doc", &[], &[]);
        assert_eq!(report.total_recall, None);
        assert_eq!(report.precision, None);
        assert_eq!(report.high_conf_precision, None);
    }

    #[test]
    fn duplicate_predictions_match_at_most_once() {
        let golden = vec![key(1)];
        let predicted = vec![(key(1), false), (key(1), false)];
        let report = doc_metrics("doc", &golden, &predicted);
        assert_eq!(report.matched, 1);
        assert_eq!(report.precision, Some(0.5));
    }

    #[test]
    fn match_is_order_stable() {
        let golden = vec![key(1), key(1)];
        let predicted = vec![key(1)];
        let pairs = match_records(&golden, &predicted);
        assert_eq!(pairs, vec![(0, 0)]);
    }

    #[test]
    fn percent_keys_compare_numerically() {
        let golden = GoldenCommitment {
            company_id: "c".into(),
            doc_id: "d".into(),
            target_year: Some(2030),
            base_year: None,
            target_percent: Some(30.0),
            target_type: None,
            scope: None,
        };
        assert_eq!(
            MetricKey::from_golden(&golden).target_percent,
            Some("30".to_string())
        );
    }

    #[test]
    fn grouped_splits_are_deterministic_and_grouped() {
        use crate::embedding::HashedBagBackend;
        use crate::extract::store::GoldenExampleLine;
        let mut rec = RawCommitment::empty();
        rec.target_year = "2030".into();
        let lines: Vec<GoldenExampleLine> = (0..6)
            .map(|i| GoldenExampleLine {
                // contexts 0 and 1 repeat so each has two examples
                context: format!("context number {} reduce emissions", i % 3),
                sub_context: format!("context number {}", i % 3),
                expected: vec![rec.clone()],
            })
            .collect();
        let store = ExampleStore::from_lines(lines, &HashedBagBackend::default()).unwrap();
        let a = grouped_splits(&store, 4, 7).unwrap();
        let b = grouped_splits(&store, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = grouped_splits(&store, 4, 8).unwrap();
        assert_ne!(a, c, "different seed should shuffle differently");
        for (train, test) in &a {
            assert!(!train.is_empty() && !test.is_empty());
            // grouping: examples with the same context stay together
            for idx_set in [train, test] {
                for &i in idx_set {
                    let ctx = &store.examples()[i].context;
                    let twin = (0..store.len()).find(|&j| {
                        j != i && &store.examples()[j].context == ctx
                    });
                    if let Some(j) = twin {
                        assert!(idx_set.contains(&j), "context group split apart");
                    }
                }
            }
        }
    }

    #[test]
    fn golden_containment_checks_all_present_fields() {
        let cfg = ValidationConfig::default();
        let golden = GoldenCommitment {
            company_id: "c".into(),
            doc_id: "d".into(),
            target_year: Some(2030),
            base_year: Some(2015),
            target_percent: Some(30.0),
            target_type: Some("absolute".into()),
            scope: Some("12".into()),
        };
        let full = "reduce absolute scope 1 and 2 emissions by 30% by 2030 from 2015";
        assert!(golden_contained(&golden, full, &cfg));
        assert!(!golden_contained(&golden, "reduce absolute scope 1 and 2 emissions", &cfg));
        let partial = GoldenCommitment {
            base_year: None,
            target_type: None,
            ..golden
        };
        assert!(golden_contained(&partial, "scope 1 and 2 down 30% by 2030", &cfg));
    }
}
