//! MAP / MRR over per-question rankings and TREC run/qrel output.
//!
//! Candidates are ranked by descending score with ties kept in input order.
//! Only questions with at least one positive and one negative candidate are
//! scored; the rest are counted as skipped.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::Serialize;

use crate::dataio::QAPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub qid: String,
    pub aid: String,
    pub score: f64,
    pub label: u8,
}

impl ScoredPair {
    pub fn new(qid: impl Into<String>, aid: impl Into<String>, score: f64, label: u8) -> Self {
        Self {
            qid: qid.into(),
            aid: aid.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub aid: String,
    pub score: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedQuery {
    pub qid: String,
    /// Descending score, input order among ties.
    pub entries: Vec<RankedEntry>,
}

impl RankedQuery {
    pub fn from_unsorted(qid: impl Into<String>, mut entries: Vec<RankedEntry>) -> Self {
        // stable sort keeps input order among equal scores
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Self {
            qid: qid.into(),
            entries,
        }
    }

    pub fn is_evaluable(&self) -> bool {
        self.entries.iter().any(|e| e.label == 1) && self.entries.iter().any(|e| e.label == 0)
    }
}

/// Groups by qid in order of first appearance and sorts each group.
pub fn rank(scored: &[ScoredPair]) -> Vec<RankedQuery> {
    let mut groups: IndexMap<&str, Vec<RankedEntry>> = IndexMap::new();
    for s in scored {
        groups.entry(s.qid.as_str()).or_default().push(RankedEntry {
            aid: s.aid.clone(),
            score: s.score,
            label: s.label,
        });
    }
    groups
        .into_iter()
        .map(|(qid, entries)| RankedQuery::from_unsorted(qid, entries))
        .collect()
}

/// Splits queries into (evaluable, skipped).
pub fn filter_questions(queries: Vec<RankedQuery>) -> (Vec<RankedQuery>, Vec<RankedQuery>) {
    queries.into_iter().partition(RankedQuery::is_evaluable)
}

fn require_evaluable(q: &RankedQuery) -> Result<()> {
    if q.is_evaluable() {
        Ok(())
    } else {
        Err(Error::Contract(format!(
            "query {} needs both a positive and a negative candidate",
            q.qid
        )))
    }
}

pub fn average_precision(q: &RankedQuery) -> Result<f64> {
    require_evaluable(q)?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in q.entries.iter().enumerate() {
        if e.label == 1 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / hits as f64)
}

pub fn reciprocal_rank(q: &RankedQuery) -> Result<f64> {
    require_evaluable(q)?;
    let first = q
        .entries
        .iter()
        .position(|e| e.label == 1)
        .expect("evaluable query has a positive");
    Ok(1.0 / (first + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryScores {
    pub ap: f64,
    pub rr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub map: f64,
    pub mrr: f64,
    pub per_query: IndexMap<String, QueryScores>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
}

pub fn evaluate(scored: &[ScoredPair]) -> Result<EvalReport> {
    let (evaluable, skipped) = filter_questions(rank(scored));
    if evaluable.is_empty() {
        return Err(Error::Eval(format!(
            "no question has both positive and negative candidates ({} skipped)",
            skipped.len()
        )));
    }
    let mut per_query = IndexMap::with_capacity(evaluable.len());
    for q in &evaluable {
        per_query.insert(
            q.qid.clone(),
            QueryScores {
                ap: average_precision(q)?,
                rr: reciprocal_rank(q)?,
            },
        );
    }
    let n = per_query.len() as f64;
    let map = per_query.values().map(|s| s.ap).sum::<f64>() / n;
    let mrr = per_query.values().map(|s| s.rr).sum::<f64>() / n;
    Ok(EvalReport {
        map,
        mrr,
        per_query,
        n_evaluated: evaluable.len(),
        n_skipped: skipped.len(),
    })
}

/// `qid Q0 aid rank score tag` lines, rank 1-based after sorting.
pub fn trec_run(scored: &[ScoredPair], tag: &str) -> String {
    let mut out = String::new();
    for q in rank(scored) {
        for (i, e) in q.entries.iter().enumerate() {
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                q.qid,
                e.aid,
                i + 1,
                e.score,
                tag
            ));
        }
    }
    out
}

/// `qid 0 aid label` lines in input order.
pub fn qrels(pairs: &[QAPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{} 0 {} {}\n", p.qid, p.aid, p.label));
    }
    out
}

pub fn write_trec_run(scored: &[ScoredPair], tag: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, trec_run(scored, tag)).map_err(|e| Error::io(path, e))
}

pub fn write_qrels(pairs: &[QAPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, qrels(pairs)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn query(labels: &[u8]) -> Vec<ScoredPair> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ScoredPair::new("q", format!("a{i}"), -(i as f64), l))
            .collect()
    }

    fn ranked(labels: &[u8]) -> RankedQuery {
        rank(&query(labels)).pop().unwrap()
    }

    #[test]
    fn ap_rr_examples() {
        let q = ranked(&[1, 0, 1]);
        assert!((average_precision(&q).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(reciprocal_rank(&q).unwrap(), 1.0);

        let q = ranked(&[1, 1, 0, 0]);
        assert_eq!(average_precision(&q).unwrap(), 1.0);
        assert_eq!(reciprocal_rank(&q).unwrap(), 1.0);

        let q = ranked(&[0, 1]);
        assert_eq!(average_precision(&q).unwrap(), 0.5);
        assert_eq!(reciprocal_rank(&q).unwrap(), 0.5);

        assert!(matches!(
            average_precision(&ranked(&[1, 1])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn filtering() {
        let (ok, skipped) =
            filter_questions(vec![ranked(&[1, 0]), ranked(&[1, 1]), ranked(&[0, 0, 0])]);
        assert_eq!(ok.len(), 1);
        assert_eq!(skipped.len(), 2);
    }

    #[test]
    fn evaluate_examples() {
        let r = evaluate(&query(&[1, 0, 1])).unwrap();
        assert!((r.map - 0.8333333333333334).abs() < 1e-15);
        assert_eq!(r.mrr, 1.0);

        let mut two = vec![
            ScoredPair::new("q1", "a", 0.9, 1),
            ScoredPair::new("q1", "b", 0.1, 0),
            ScoredPair::new("q2", "c", 0.9, 0),
            ScoredPair::new("q2", "d", 0.1, 1),
            ScoredPair::new("q3", "e", 0.5, 0),
        ];
        let r = evaluate(&two).unwrap();
        assert_eq!(r.map, 0.75);
        assert_eq!(r.n_evaluated, 2);
        assert_eq!(r.n_skipped, 1);
        assert_eq!(r.per_query.keys().collect::<Vec<_>>(), ["q1", "q2"]);

        two.clear();
        assert!(matches!(evaluate(&two), Err(Error::Eval(_))));
    }

    #[test]
    fn ties_keep_input_order() {
        let s = vec![
            ScoredPair::new("q", "x", 0.5, 0),
            ScoredPair::new("q", "y", 0.5, 1),
            ScoredPair::new("q", "z", 0.5, 0),
        ];
        let q = rank(&s).pop().unwrap();
        let order: Vec<_> = q.entries.iter().map(|e| e.aid.as_str()).collect();
        assert_eq!(order, ["x", "y", "z"]);
        assert_eq!(evaluate(&s).unwrap().mrr, 0.5);
    }

    #[test]
    fn run_and_qrel_format() {
        let s = vec![ScoredPair::new("q1", "a1", 0.75, 1)];
        assert_eq!(trec_run(&s, "csr"), "q1 Q0 a1 1 0.750000 csr\n");
        assert_eq!(trec_run(&[], "csr"), "");
        let p = QAPair {
            qid: "q1".into(),
            aid: "a1".into(),
            question: "?".into(),
            answer: ".".into(),
            label: 1,
        };
        assert_eq!(qrels(&[p]), "q1 0 a1 1\n");
    }

    /// AP and RR straight from their definitions, by scanning all entries and
    /// counting how many positives outrank each one.
    fn brute(labels_by_rank: &[u8]) -> (f64, f64) {
        let r = labels_by_rank.iter().filter(|&&l| l == 1).count() as f64;
        let mut ap = 0.0;
        let mut rr = 0.0;
        for (k, &l) in labels_by_rank.iter().enumerate() {
            if l == 1 {
                let rel_at_k = labels_by_rank[..=k].iter().filter(|&&x| x == 1).count() as f64;
                ap += rel_at_k / (k + 1) as f64;
                if rr == 0.0 {
                    rr = 1.0 / (k + 1) as f64;
                }
            }
        }
        (ap / r, rr)
    }

    fn instance() -> impl Strategy<Value = Vec<(u8, Vec<(u32, u8)>)>> {
        proptest::collection::vec(
            (
                0u8..6,
                proptest::collection::vec((0u32..1000, 0u8..2), 1..8),
            ),
            1..6,
        )
    }

    fn to_scored(inst: &[(u8, Vec<(u32, u8)>)]) -> Vec<ScoredPair> {
        let mut out = Vec::new();
        for (qi, (_, entries)) in inst.iter().enumerate() {
            for (ai, (s, l)) in entries.iter().enumerate() {
                out.push(ScoredPair::new(
                    format!("q{qi}"),
                    format!("a{ai}"),
                    *s as f64 / 7.0,
                    *l,
                ));
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(inst in instance()) {
            let scored = to_scored(&inst);
            let mut expect = Vec::new();
            for q in rank(&scored) {
                let labels: Vec<u8> = q.entries.iter().map(|e| e.label).collect();
                if labels.contains(&0) && labels.contains(&1) {
                    expect.push(brute(&labels));
                }
            }
            match evaluate(&scored) {
                Ok(r) => {
                    let n = expect.len() as f64;
                    let map: f64 = expect.iter().map(|e| e.0).sum::<f64>() / n;
                    let mrr: f64 = expect.iter().map(|e| e.1).sum::<f64>() / n;
                    prop_assert_eq!(r.map, map);
                    prop_assert_eq!(r.mrr, mrr);
                    for (s, (ap, first_summand)) in r.per_query.values().zip(&expect) {
                        prop_assert_eq!(s.ap, *ap);
                        // RR is the precision at the first relevant rank.
                        prop_assert_eq!(s.rr, *first_summand);
                        prop_assert!((0.0..=1.0).contains(&s.ap) && (0.0..=1.0).contains(&s.rr));
                    }
                }
                Err(_) => prop_assert!(expect.is_empty()),
            }
        }

        #[test]
        fn invariant_under_monotone_transform(inst in instance()) {
            let scored = to_scored(&inst);
            let transformed: Vec<ScoredPair> = scored
                .iter()
                .map(|s| ScoredPair { score: (3.0 * s.score).exp() - 5.0, ..s.clone() })
                .collect();
            match (evaluate(&scored), evaluate(&transformed)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.map, b.map);
                    prop_assert_eq!(a.mrr, b.mrr);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn invariant_under_query_permutation(inst in instance()) {
            let scored = to_scored(&inst);
            let mut reversed_queries = scored.clone();
            reversed_queries.sort_by_key(|s| std::cmp::Reverse(s.qid.clone()));
            if let (Ok(a), Ok(b)) = (evaluate(&scored), evaluate(&reversed_queries)) {
                prop_assert!((a.map - b.map).abs() < 1e-12);
                prop_assert!((a.mrr - b.mrr).abs() < 1e-12);
            }
        }
    }
}
