//! Per-company consolidation and deduplication of scored records:
//! embedding + exact-match similarity, transitive clustering, majority-vote
//! attribute selection, and the pre-consolidation debug dump.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingBackend, EmbeddingVector};
use crate::error::{Error, Result};
use crate::text::normalize_ws_casefold;
use crate::validate::{
    completeness, rescore, AuxFlags, ErrorCode, OutputRecord, ScoredRecord, ValidationConfig,
};

/// Component-by-component similarity between two records of one company.
/// Components where either side is missing are excluded from the mean;
/// scoring them zero instead would cap the score at 7/8 and make merging a
/// record that merely lacks one field impossible.
#[derive(Debug, Clone)]
pub struct SimilarityBreakdown {
    /// Cosine similarities for (target_wording, sub_context, entity_name).
    pub text_components: [Option<f64>; 3],
    /// Match indicators for (target_year, base_year, target_percent,
    /// target_type, scope).
    pub exact_components: [Option<f64>; 5],
    pub applicable_count: usize,
    pub score: f64,
}

/// A consolidated group of mutually similar records.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub consolidated: ScoredRecord,
}

/// One pre-consolidation record in the debug dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebugLine {
    #[serde(flatten)]
    pub record: OutputRecord,
    pub cluster_id: usize,
    pub kept: bool,
}

/// Result of per-company deduplication.
#[derive(Debug, Clone)]
pub struct DedupOutcome {
    pub finals: Vec<ScoredRecord>,
    pub debug: Vec<DebugLine>,
}

/// Embeddings of the three text fields, computed once per record.
struct FieldEmbeddings {
    wording: Option<EmbeddingVector>,
    sub_context: Option<EmbeddingVector>,
    entity: Option<EmbeddingVector>,
}

fn embed_fields(
    records: &[ScoredRecord],
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<FieldEmbeddings>> {
    let mut texts = Vec::new();
    let mut slots: Vec<[Option<usize>; 3]> = Vec::with_capacity(records.len());
    for rec in records {
        let mut slot = [None, None, None];
        for (i, value) in [
            &rec.record.target_wording,
            &rec.record.sub_context,
            &rec.record.entity_name,
        ]
        .into_iter()
        .enumerate()
        {
            if let Some(text) = value {
                slot[i] = Some(texts.len());
                texts.push(text.clone());
            }
        }
        slots.push(slot);
    }
    let vectors = backend.embed_batch(&texts)?;
    Ok(slots
        .into_iter()
        .map(|slot| FieldEmbeddings {
            wording: slot[0].map(|i| vectors[i].clone()),
            sub_context: slot[1].map(|i| vectors[i].clone()),
            entity: slot[2].map(|i| vectors[i].clone()),
        })
        .collect())
}

/// Similarity between two records of the same company.
pub fn similarity(
    a: &ScoredRecord,
    b: &ScoredRecord,
    backend: &dyn EmbeddingBackend,
) -> Result<SimilarityBreakdown> {
    if a.record.provenance.meta.company_id != b.record.provenance.meta.company_id {
        return Err(Error::Dedup(format!(
            "similarity compares records of one company, got {} and {}",
            a.record.provenance.meta.company_id, b.record.provenance.meta.company_id
        )));
    }
    let pair = [a, b];
    let embeddings = embed_fields(&[pair[0].clone(), pair[1].clone()], backend)?;
    breakdown(a, b, &embeddings[0], &embeddings[1])
}

fn breakdown(
    a: &ScoredRecord,
    b: &ScoredRecord,
    ea: &FieldEmbeddings,
    eb: &FieldEmbeddings,
) -> Result<SimilarityBreakdown> {
    let text_component = |va: &Option<String>,
                          vb: &Option<String>,
                          xa: &Option<EmbeddingVector>,
                          xb: &Option<EmbeddingVector>|
     -> Result<Option<f64>> {
        match (va, vb, xa, xb) {
            (Some(sa), Some(sb), Some(xa), Some(xb)) => {
                // identical strings are maximally similar even when the
                // backend maps them to the zero vector
                if normalize_ws_casefold(sa) == normalize_ws_casefold(sb) {
                    Ok(Some(1.0))
                } else {
                    Ok(Some(cosine(xa, xb)?))
                }
            }
            _ => Ok(None),
        }
    };
    let text_components = [
        text_component(
            &a.record.target_wording,
            &b.record.target_wording,
            &ea.wording,
            &eb.wording,
        )?,
        text_component(
            &a.record.sub_context,
            &b.record.sub_context,
            &ea.sub_context,
            &eb.sub_context,
        )?,
        text_component(
            &a.record.entity_name,
            &b.record.entity_name,
            &ea.entity,
            &eb.entity,
        )?,
    ];

    fn exact<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> Option<f64> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if x == y { 1.0 } else { 0.0 }),
            _ => None,
        }
    }
    let exact_components = [
        exact(&a.record.target_year, &b.record.target_year),
        exact(&a.record.base_year, &b.record.base_year),
        exact(&a.record.target_percent, &b.record.target_percent),
        exact(&a.record.target_type, &b.record.target_type),
        exact(&a.record.scope, &b.record.scope),
    ];

    let applicable: Vec<f64> = text_components
        .iter()
        .chain(exact_components.iter())
        .filter_map(|c| *c)
        .collect();
    let applicable_count = applicable.len();
    let score = if applicable.is_empty() {
        0.0
    } else {
        applicable.iter().sum::<f64>() / applicable_count as f64
    };
    Ok(SimilarityBreakdown {
        text_components,
        exact_components,
        applicable_count,
        score,
    })
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            self.parent[x] = self.find(self.parent[x]);
        }
        self.parent[x]
    }

    fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            Ordering::Less => self.parent[rx] = ry,
            Ordering::Greater => self.parent[ry] = rx,
            Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
    }
}

/// Transitive closure of pairwise similarity strictly above the threshold.
/// Clusters are ordered by their smallest member index, members ascending.
pub fn cluster(
    records: &[ScoredRecord],
    threshold: f64,
    backend: &dyn EmbeddingBackend,
) -> Result<Vec<Vec<usize>>> {
    let embeddings = embed_fields(records, backend)?;
    let mut uf = UnionFind::new(records.len());
    for i in 0..records.len() {
        for j in (i + 1)..records.len() {
            let sim = breakdown(&records[i], &records[j], &embeddings[i], &embeddings[j])?;
            if sim.score > threshold {
                uf.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..records.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    clusters.sort_by_key(|members| members[0]);
    Ok(clusters)
}

/// Best member first: highest confidence, ties broken by lowest
/// (doc_id, chunk_index).
fn cmp_members(a: &ScoredRecord, b: &ScoredRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.record.provenance.doc_id.cmp(&b.record.provenance.doc_id))
        .then_with(|| a.record.provenance.chunk_index.cmp(&b.record.provenance.chunk_index))
}

/// Merge a cluster into one record: per attribute, the modal non-missing
/// value wins, ties resolved by the best member holding a tied value.
/// The rule and completeness checks are re-run on the result; the
/// representative member's hallucination result and flags are carried over.
pub fn consolidate(
    records: &[ScoredRecord],
    members: &[usize],
    cfg: &ValidationConfig,
) -> ScoredRecord {
    assert!(!members.is_empty(), "cluster must be non-empty");
    let representative = members
        .iter()
        .copied()
        .min_by(|&a, &b| cmp_members(&records[a], &records[b]))
        .expect("non-empty cluster");
    let rep = &records[representative];

    let mut record = rep.record.clone();
    record.target_year = vote(records, members, |r| r.record.target_year);
    record.base_year = vote(records, members, |r| r.record.base_year);
    record.target_percent = vote(records, members, |r| r.record.target_percent);
    record.target_type = vote(records, members, |r| r.record.target_type.clone());
    record.scope = vote(records, members, |r| r.record.scope.clone());
    record.target_wording = vote(records, members, |r| r.record.target_wording.clone());
    record.sub_context = vote(records, members, |r| r.record.sub_context.clone());
    record.entity_name = vote(records, members, |r| r.record.entity_name.clone());

    let hallucination_codes: Vec<ErrorCode> = rep
        .error_codes
        .iter()
        .filter(|c| matches!(c, ErrorCode::Hallucinated(_)))
        .copied()
        .collect();
    rescore(
        record,
        rep.hallucination_score,
        hallucination_codes,
        AuxFlags {
            entity_match: rep.entity_match,
            boundary: rep.boundary,
        },
        cfg,
    )
}

/// Modal non-missing value across the members. Ties go to the value held by
/// the best member (highest confidence, then lowest provenance).
fn vote<T, F>(records: &[ScoredRecord], members: &[usize], get: F) -> Option<T>
where
    T: Clone + PartialEq,
    F: Fn(&ScoredRecord) -> Option<T>,
{
    let mut tallies: Vec<(T, usize, usize)> = Vec::new(); // (value, count, best member)
    for &m in members {
        let Some(value) = get(&records[m]) else {
            continue;
        };
        match tallies.iter_mut().find(|(v, _, _)| *v == value) {
            Some((_, count, best)) => {
                *count += 1;
                if cmp_members(&records[m], &records[*best]) == Ordering::Less {
                    *best = m;
                }
            }
            None => tallies.push((value, 1, m)),
        }
    }
    tallies
        .into_iter()
        .max_by(|(_, ca, ba), (_, cb, bb)| {
            ca.cmp(cb)
                .then_with(|| cmp_members(&records[*bb], &records[*ba]))
        })
        .map(|(value, _, _)| value)
}

/// Full per-company deduplication: cluster, consolidate, collapse groups
/// with identical five-metric tuples keeping the highest confidence, and
/// sort the survivors by descending confidence. Every input record appears
/// in the debug dump with its cluster id and whether it was kept.
pub fn deduplicate(
    records: &[ScoredRecord],
    threshold: f64,
    backend: &dyn EmbeddingBackend,
    cfg: &ValidationConfig,
) -> Result<DedupOutcome> {
    if records.is_empty() {
        return Ok(DedupOutcome {
            finals: Vec::new(),
            debug: Vec::new(),
        });
    }
    let company = &records[0].record.provenance.meta.company_id;
    if records
        .iter()
        .any(|r| &r.record.provenance.meta.company_id != company)
    {
        return Err(Error::Dedup(
            "deduplicate expects records of a single company".into(),
        ));
    }

    let clusters = cluster(records, threshold, backend)?;
    let consolidated: Vec<ScoredRecord> = clusters
        .iter()
        .map(|members| consolidate(records, members, cfg))
        .collect();

    // Group consolidated records by their five-metric tuple; the highest
    // confidence in each group survives.
    let mut winners: Vec<usize> = Vec::new(); // indices into `consolidated`
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (ci, rec) in consolidated.iter().enumerate() {
        groups.entry(metric_group_key(rec)).or_default().push(ci);
    }
    for group in groups.values() {
        let &winner = group
            .iter()
            .min_by(|&&a, &&b| cmp_members(&consolidated[a], &consolidated[b]))
            .expect("non-empty group");
        winners.push(winner);
    }

    let mut finals: Vec<ScoredRecord> =
        winners.iter().map(|&ci| consolidated[ci].clone()).collect();
    finals.sort_by(|a, b| cmp_members(a, b));

    // A record is kept when it was the representative of a winning cluster.
    let mut kept_inputs = vec![false; records.len()];
    for &ci in &winners {
        let representative = clusters[ci]
            .iter()
            .copied()
            .min_by(|&a, &b| cmp_members(&records[a], &records[b]))
            .expect("non-empty cluster");
        kept_inputs[representative] = true;
    }
    let mut cluster_of = vec![0usize; records.len()];
    for (ci, members) in clusters.iter().enumerate() {
        for &m in members {
            cluster_of[m] = ci;
        }
    }
    let debug = records
        .iter()
        .enumerate()
        .map(|(i, rec)| DebugLine {
            record: OutputRecord::from(rec),
            cluster_id: cluster_of[i],
            kept: kept_inputs[i],
        })
        .collect();

    Ok(DedupOutcome { finals, debug })
}

/// Deterministic string key over the five metric fields.
fn metric_group_key(rec: &ScoredRecord) -> String {
    let r = &rec.record;
    format!(
        "{:?}|{:?}|{:?}|{:?}|{:?}",
        r.target_year,
        r.base_year,
        r.target_percent.map(|p| p.to_string()),
        r.target_type,
        r.scope
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocumentMeta, ReportType};
    use crate::embedding::HashedBagBackend;
    use crate::extract::{Boundary, RawCommitment};
    use crate::validate::{normalize, score, Provenance};

    const CONTEXT: &str = "we will reduce absolute scope 1 and 2 emissions by 30% by 2030 \
                           from 2015 and scope 3 emissions by 20% by 2030 from 2015 and reach \
                           net zero emissions across all scopes by 2040 or 2050";

    fn build(doc_id: &str, chunk: usize, fields: [&str; 5]) -> ScoredRecord {
        let mut raw = RawCommitment::empty();
        raw.target_year = fields[0].into();
        raw.base_year = fields[1].into();
        raw.target_percent = fields[2].into();
        raw.target_type = fields[3].into();
        raw.scope = fields[4].into();
        raw.target_wording = "reduce absolute emissions".into();
        raw.sub_context = "reduce absolute scope 1 and 2 emissions by 30% by 2030".into();
        raw.entity_name = "Acme".into();
        let provenance = Provenance {
            doc_id: doc_id.into(),
            chunk_index: chunk,
            context: CONTEXT.into(),
            meta: DocumentMeta {
                company_id: "c1".into(),
                company_name: "Acme".into(),
                report_type: ReportType::Sustainability,
                publication_year: 2023,
                source_path: "r.txt".into(),
            },
            parse_notes: Vec::new(),
        };
        let cfg = ValidationConfig::default();
        let rec = normalize(&raw, provenance, &cfg);
        score(
            rec,
            AuxFlags { entity_match: true, boundary: Boundary::CorporateWide },
            &cfg,
        )
    }

    fn backend() -> HashedBagBackend {
        HashedBagBackend::default()
    }

    fn cfg() -> ValidationConfig {
        ValidationConfig::default()
    }

    #[test]
    fn identical_records_have_similarity_one() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let b = build("d1", 1, ["2030", "2015", "30", "absolute", "12"]);
        let sim = similarity(&a, &b, &backend()).unwrap();
        assert_eq!(sim.applicable_count, 8);
        assert!((sim.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_scope_is_excluded_not_zeroed() {
        // one record lacks the scope but matches everywhere else
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "NO_ANSWER"]);
        let b = build("d1", 1, ["2030", "2015", "30", "absolute", "12"]);
        let sim = similarity(&a, &b, &backend()).unwrap();
        assert_eq!(sim.applicable_count, 7);
        assert!((sim.score - 1.0).abs() < 1e-12);
        assert!(sim.score > 0.95);
        assert_eq!(sim.exact_components[4], None);
    }

    #[test]
    fn differing_year_with_missing_base_scores_six_sevenths() {
        // same texts, target_year differs, base_year missing on one side:
        // 3 text + 3 exact matches + 1 mismatch over 7 components
        let a = build("d1", 0, ["2030", "NO_ANSWER", "30", "absolute", "12"]);
        let b = build("d1", 1, ["2040", "2015", "30", "absolute", "12"]);
        let sim = similarity(&a, &b, &backend()).unwrap();
        assert_eq!(sim.applicable_count, 7);
        assert!((sim.score - 6.0 / 7.0).abs() < 1e-12);
        assert!(sim.score < 0.95);
    }

    #[test]
    fn similarity_is_symmetric() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let b = build("d2", 3, ["2040", "2015", "20", "net zero", "3"]);
        let ab = similarity(&a, &b, &backend()).unwrap();
        let ba = similarity(&b, &a, &backend()).unwrap();
        assert_eq!(ab.score, ba.score);
        assert_eq!(ab.applicable_count, ba.applicable_count);
    }

    #[test]
    fn similarity_rejects_cross_company_pairs() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let mut b = build("d2", 0, ["2030", "2015", "30", "absolute", "12"]);
        b.record.provenance.meta.company_id = "c2".into();
        assert!(similarity(&a, &b, &backend()).is_err());
    }

    #[test]
    fn cluster_distinct_records_are_singletons() {
        let records = vec![
            build("d1", 0, ["2030", "2015", "30", "absolute", "12"]),
            build("d1", 1, ["2040", "2020", "50", "net zero", "3"]),
            build("d1", 2, ["2050", "2019", "10", "intensity", "123"]),
        ];
        let clusters = cluster(&records, 0.95, &backend()).unwrap();
        assert_eq!(clusters.len(), 3);
        assert!(clusters.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn cluster_is_transitive() {
        // A~B (B lacks scope) and B~C (C differs from A in scope): A and C
        // land in one cluster through B even though A!~C directly
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let b = build("d1", 1, ["2030", "2015", "30", "absolute", "NO_ANSWER"]);
        let c = build("d1", 2, ["2030", "2015", "30", "absolute", "3"]);
        let sim_ac = similarity(&a, &c, &backend()).unwrap();
        assert!(sim_ac.score < 0.95, "A and C must not match directly");
        let clusters = cluster(&[a, b, c], 0.95, &backend()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0], vec![0, 1, 2]);
    }

    #[test]
    fn cluster_empty_input() {
        let clusters = cluster(&[], 0.95, &backend()).unwrap();
        assert!(clusters.is_empty());
    }

    #[test]
    fn consolidate_fills_missing_scope_and_recomputes_completeness() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "NO_ANSWER"]);
        let b = build("d1", 1, ["2030", "2015", "30", "absolute", "12"]);
        assert!(a.completeness_score < 1.0);
        let records = vec![a, b];
        let merged = consolidate(&records, &[0, 1], &cfg());
        assert_eq!(merged.record.scope.as_deref(), Some("12"));
        assert_eq!(merged.completeness_score, 1.0);
        assert_eq!(merged.confidence, 1.0);
        assert!(merged.error_codes.is_empty());
    }

    #[test]
    fn consolidate_majority_vote() {
        let records = vec![
            build("d1", 0, ["2030", "2015", "30", "absolute", "12"]),
            build("d1", 1, ["2030", "2015", "30", "absolute", "12"]),
            build("d1", 2, ["2035", "2015", "30", "absolute", "12"]),
        ];
        let merged = consolidate(&records, &[0, 1, 2], &cfg());
        assert_eq!(merged.record.target_year, Some(2030));
    }

    #[test]
    fn consolidate_singleton_is_identity() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let records = vec![a.clone()];
        let merged = consolidate(&records, &[0], &cfg());
        assert_eq!(merged.record.target_year, a.record.target_year);
        assert_eq!(merged.record.scope, a.record.scope);
        assert_eq!(merged.confidence, a.confidence);
    }

    #[test]
    fn deduplicate_keeps_highest_confidence_for_identical_metrics() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let mut b = build("d2", 5, ["2030", "2015", "30", "absolute", "12"]);
        // make b unambiguously worse but with dissimilar texts so the two
        // records do not cluster, only metric-group dedup applies
        b.record.target_wording = Some("an unrelated wording about logistics fleets".into());
        b.record.sub_context = Some("completely different sentence with other goals".into());
        b.record.entity_name = Some("Zeta Holdings".into());
        b.confidence = 0.8;
        let out = deduplicate(&[a, b], 0.95, &backend(), &cfg()).unwrap();
        assert_eq!(out.finals.len(), 1);
        assert_eq!(out.finals[0].confidence, 1.0);
        assert_eq!(out.debug.len(), 2);
        assert_eq!(out.debug.iter().filter(|d| d.kept).count(), 1);
        assert!(out.debug[0].kept);
        assert!(!out.debug[1].kept);
    }

    #[test]
    fn deduplicate_sorts_by_confidence_descending() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let mut b = build("d1", 1, ["2050", "2020", "90", "net zero", "123"]);
        b.confidence = 0.5;
        let mut c = build("d1", 2, ["2040", "2018", "55", "intensity", "3"]);
        c.confidence = 0.75;
        let out = deduplicate(&[b, a, c], 0.95, &backend(), &cfg()).unwrap();
        let confidences: Vec<f64> = out.finals.iter().map(|r| r.confidence).collect();
        let mut sorted = confidences.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        assert_eq!(confidences, sorted);
        assert_eq!(out.finals.len(), 3);
    }

    #[test]
    fn deduplicate_never_invents_values() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "NO_ANSWER"]);
        let b = build("d1", 1, ["2030", "2015", "30", "absolute", "12"]);
        let inputs = [a, b];
        let out = deduplicate(&inputs, 0.95, &backend(), &cfg()).unwrap();
        for rec in &out.finals {
            for value in [&rec.record.scope, &rec.record.target_type] {
                if let Some(v) = value {
                    assert!(
                        inputs.iter().any(|i| {
                            i.record.scope.as_ref() == Some(v)
                                || i.record.target_type.as_ref() == Some(v)
                        }),
                        "value {v} must come from some input"
                    );
                }
            }
        }
    }

    #[test]
    fn deduplicate_rejects_mixed_companies() {
        let a = build("d1", 0, ["2030", "2015", "30", "absolute", "12"]);
        let mut b = build("d2", 0, ["2030", "2015", "30", "absolute", "12"]);
        b.record.provenance.meta.company_id = "c2".into();
        assert!(deduplicate(&[a, b], 0.95, &backend(), &cfg()).is_err());
    }

    #[test]
    fn deduplicate_empty_input() {
        let out = deduplicate(&[], 0.95, &backend(), &cfg()).unwrap();
        assert!(out.finals.is_empty());
        assert!(out.debug.is_empty());
    }
}
