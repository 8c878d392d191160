//! Graded-relevance log-replay evaluation.
//!
//! Each replayed query carries its own candidate pool with feedback grades
//! ordered purchase > like > comment > click > view. A scorer ranks the pool,
//! and nDCG/Precision/Recall are computed at each cutoff, aggregated overall
//! and over the long-query stratum. Per-query work is order-independent and
//! parallel-safe; aggregation reduces in fixed query order so results are
//! bit-stable regardless of worker count.

pub mod compare;
pub mod correlation;
pub mod sts;

pub use compare::{compare_models, DeltaReport};
pub use correlation::{pearson, spearman};
pub use sts::{sts_evaluate, StsDimResult, StsPair};

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Queries with at least this many characters form the long stratum.
pub const LONG_QUERY_MIN_CHARS: usize = 10;

/// Ordinal feedback strength. Declaration order makes the derived ordering
/// follow View < Click < Comment < Like < Purchase.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackGrade {
    View,
    Click,
    Comment,
    Like,
    Purchase,
}

impl FeedbackGrade {
    /// Gain level g: purchase 4, like 3, comment 2, click 1, view 0.
    pub fn gain(self) -> u32 {
        match self {
            FeedbackGrade::Purchase => 4,
            FeedbackGrade::Like => 3,
            FeedbackGrade::Comment => 2,
            FeedbackGrade::Click => 1,
            FeedbackGrade::View => 0,
        }
    }

    /// Relevance binarizes at click (g >= 1).
    pub fn is_relevant(self) -> bool {
        self.gain() >= 1
    }

    pub const ALL: [FeedbackGrade; 5] = [
        FeedbackGrade::View,
        FeedbackGrade::Click,
        FeedbackGrade::Comment,
        FeedbackGrade::Like,
        FeedbackGrade::Purchase,
    ];
}

/// A pool entry: item plus the feedback grade it earned.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GradedCandidate {
    pub item_id: String,
    pub grade: FeedbackGrade,
}

/// One replayed query with its graded candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub text: String,
    /// Item ids unique within the pool.
    pub candidates: Vec<GradedCandidate>,
}

impl EvalQuery {
    pub fn new(
        query_id: impl Into<String>,
        text: impl Into<String>,
        candidates: Vec<GradedCandidate>,
    ) -> Result<Self> {
        let query_id = query_id.into();
        let mut seen = std::collections::HashSet::new();
        for c in &candidates {
            if !seen.insert(c.item_id.as_str()) {
                return Err(Error::Config(format!(
                    "query {query_id}: duplicate candidate {}",
                    c.item_id
                )));
            }
        }
        Ok(EvalQuery {
            query_id,
            text: text.into(),
            candidates,
        })
    }

    /// Character count of the raw query string decides the stratum.
    pub fn is_long(&self) -> bool {
        self.text.chars().count() >= LONG_QUERY_MIN_CHARS
    }
}

/// DCG with exponential gains (2^g - 1) and log2(i+1) discount, cutoff k.
fn dcg(gains: &[u32], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| {
            let gain = (1u64 << g) as f64 - 1.0;
            gain / ((i + 2) as f64).log2()
        })
        .sum()
}

/// nDCG@k against the ideal ordering of the same grade multiset.
/// Defined as 0 when the ideal DCG is 0 (pool is all views).
pub fn ndcg_at_k(gains_in_rank_order: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let actual = dcg(gains_in_rank_order, k);
    let mut ideal: Vec<u32> = gains_in_rank_order.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        0.0
    } else {
        actual / idcg
    }
}

/// Precision@k (denominator k, not min(k, n)) and Recall@k against the
/// number of relevant items in the pool. Recall is 0 when the pool has no
/// relevant item.
pub fn precision_recall_at_k(
    gains_in_rank_order: &[u32],
    k: usize,
    relevant_in_pool: usize,
) -> (f64, f64) {
    let hits = gains_in_rank_order
        .iter()
        .take(k)
        .filter(|&&g| g >= 1)
        .count();
    let precision = hits as f64 / k as f64;
    let recall = if relevant_in_pool == 0 {
        0.0
    } else {
        hits as f64 / relevant_in_pool as f64
    };
    (precision, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KMetrics {
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub is_long: bool,
    pub per_k: BTreeMap<usize, KMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AggregateMetrics {
    pub ndcg: f64,
    /// Mean nDCG over the long-query stratum (0 when the stratum is empty).
    pub ndcg_long: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SkippedQuery {
    pub query_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub query_count: usize,
    pub long_count: usize,
    pub per_k: BTreeMap<usize, AggregateMetrics>,
    pub per_query: Vec<QueryMetrics>,
    /// Queries dropped because an item could not be scored; never silent.
    pub skipped: Vec<SkippedQuery>,
}

/// Rank every query's own candidate pool with `scorer` and aggregate
/// unweighted means at each cutoff. Ties in score break by ascending
/// item id. A query whose scorer fails on any item is skipped and recorded.
pub fn replay_evaluate<F>(queries: &[EvalQuery], scorer: F, ks: &[usize]) -> Result<MetricReport>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    if ks.is_empty() || ks.iter().any(|&k| k == 0) {
        return Err(Error::Config("cutoffs must be non-empty and >= 1".into()));
    }
    let mut ks_sorted: Vec<usize> = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();

    let outcomes: Vec<std::result::Result<QueryMetrics, SkippedQuery>> = queries
        .par_iter()
        .map(|query| {
            let mut scored: Vec<(f64, &str, u32)> = Vec::with_capacity(query.candidates.len());
            for c in &query.candidates {
                match scorer(&query.text, &c.item_id) {
                    Ok(s) if s.is_finite() => scored.push((s, &c.item_id, c.grade.gain())),
                    Ok(s) => {
                        return Err(SkippedQuery {
                            query_id: query.query_id.clone(),
                            reason: format!("non-finite score {s} for item {}", c.item_id),
                        })
                    }
                    Err(e) => {
                        return Err(SkippedQuery {
                            query_id: query.query_id.clone(),
                            reason: e.to_string(),
                        })
                    }
                }
            }
            scored.sort_unstable_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.1.cmp(b.1))
            });
            let gains: Vec<u32> = scored.iter().map(|&(_, _, g)| g).collect();
            let relevant = gains.iter().filter(|&&g| g >= 1).count();
            let per_k = ks_sorted
                .iter()
                .map(|&k| {
                    let ndcg = ndcg_at_k(&gains, k);
                    let (precision, recall) = precision_recall_at_k(&gains, k, relevant);
                    (
                        k,
                        KMetrics {
                            ndcg,
                            precision,
                            recall,
                        },
                    )
                })
                .collect();
            Ok(QueryMetrics {
                query_id: query.query_id.clone(),
                is_long: query.is_long(),
                per_k,
            })
        })
        .collect();

    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(m) => per_query.push(m),
            Err(s) => skipped.push(s),
        }
    }

    let query_count = per_query.len();
    let long_count = per_query.iter().filter(|q| q.is_long).count();
    let mut per_k = BTreeMap::new();
    for &k in &ks_sorted {
        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64); // ndcg, ndcg_long, precision, recall
        for q in &per_query {
            let m = &q.per_k[&k];
            sums.0 += m.ndcg;
            if q.is_long {
                sums.1 += m.ndcg;
            }
            sums.2 += m.precision;
            sums.3 += m.recall;
        }
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        per_k.insert(
            k,
            AggregateMetrics {
                ndcg: mean(sums.0, query_count),
                ndcg_long: mean(sums.1, long_count),
                precision: mean(sums.2, query_count),
                recall: mean(sums.3, query_count),
            },
        );
    }

    Ok(MetricReport {
        ks: ks_sorted,
        query_count,
        long_count,
        per_k,
        per_query,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grade_order_and_gains() {
        use FeedbackGrade::*;
        assert!(Purchase > Like && Like > Comment && Comment > Click && Click > View);
        assert_eq!(
            FeedbackGrade::ALL.map(FeedbackGrade::gain),
            [0, 1, 2, 3, 4]
        );
        // The gain map preserves the total order.
        for pair in FeedbackGrade::ALL.windows(2) {
            assert!(pair[0].gain() < pair[1].gain());
        }
    }

    #[test]
    fn grade_serde_round_trip() {
        for grade in FeedbackGrade::ALL {
            let json = serde_json::to_string(&grade).unwrap();
            assert_eq!(json, json.to_lowercase());
            let back: FeedbackGrade = serde_json::from_str(&json).unwrap();
            assert_eq!(back, grade);
        }
        assert_eq!(
            serde_json::from_str::<FeedbackGrade>("\"purchase\"").unwrap(),
            FeedbackGrade::Purchase
        );
    }

    #[test]
    fn ndcg_perfect_ranking_is_one() {
        assert_eq!(ndcg_at_k(&[4, 1, 0], 3), 1.0);
    }

    #[test]
    fn ndcg_hand_case() {
        // DCG = 15 + 0 + 1/2 = 15.5; IDCG = 15 + 1/log2(3).
        let got = ndcg_at_k(&[4, 0, 1], 3);
        let expect = 15.5 / (15.0 + 1.0 / 3.0f64.log2());
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.99162).abs() < 1e-5);
    }

    #[test]
    fn ndcg_all_views_is_zero() {
        assert_eq!(ndcg_at_k(&[0, 0, 0, 0], 4), 0.0);
        assert_eq!(ndcg_at_k(&[], 5), 0.0);
    }

    #[test]
    fn ndcg_swapping_misordered_adjacent_pair_does_not_decrease() {
        let mut rng = crate::rng::Rng::seed_from(61);
        for _ in 0..100 {
            let n = 3 + rng.index(10);
            let mut gains: Vec<u32> = (0..n).map(|_| rng.below(5) as u32).collect();
            // Find a misordered adjacent pair.
            let Some(i) = (0..n - 1).find(|&i| gains[i] < gains[i + 1]) else {
                continue;
            };
            let before = ndcg_at_k(&gains, n);
            gains.swap(i, i + 1);
            let after = ndcg_at_k(&gains, n);
            assert!(after >= before - 1e-12);
        }
    }

    #[test]
    fn precision_recall_hand_cases() {
        let (p, _) = precision_recall_at_k(&[1, 0, 4, 0, 0], 5, 2);
        assert_eq!(p, 0.4);
        let (_, r) = precision_recall_at_k(&[1, 4, 2, 0], 4, 3);
        assert_eq!(r, 1.0);
        // Single Click candidate at k=5: precision 1/5, recall 1.
        let (p, r) = precision_recall_at_k(&[1], 5, 1);
        assert_eq!(p, 0.2);
        assert_eq!(r, 1.0);
        assert_eq!(ndcg_at_k(&[1], 5), 1.0);
        // No relevant in pool: recall defined as 0.
        let (_, r) = precision_recall_at_k(&[0, 0], 2, 0);
        assert_eq!(r, 0.0);
    }

    /// Straight-line reference implementation, structurally independent of
    /// the main path: powers by repeated multiplication, discounts via ln.
    fn reference_metrics(gains: &[u32], k: usize) -> (f64, f64, f64) {
        let pow2 = |g: u32| -> f64 {
            let mut v = 1.0f64;
            for _ in 0..g {
                v *= 2.0;
            }
            v
        };
        let mut dcg = 0.0;
        let mut i = 0;
        while i < gains.len() && i < k {
            dcg += (pow2(gains[i]) - 1.0) / (((i + 2) as f64).ln() / 2.0f64.ln());
            i += 1;
        }
        let mut sorted = gains.to_vec();
        sorted.sort_unstable();
        sorted.reverse();
        let mut idcg = 0.0;
        let mut i = 0;
        while i < sorted.len() && i < k {
            idcg += (pow2(sorted[i]) - 1.0) / (((i + 2) as f64).ln() / 2.0f64.ln());
            i += 1;
        }
        let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
        let mut hits = 0usize;
        let mut i = 0;
        while i < gains.len() && i < k {
            if gains[i] >= 1 {
                hits += 1;
            }
            i += 1;
        }
        let relevant = gains.iter().filter(|&&g| g >= 1).count();
        let precision = hits as f64 / k as f64;
        let recall = if relevant == 0 {
            0.0
        } else {
            hits as f64 / relevant as f64
        };
        (ndcg, precision, recall)
    }

    #[test]
    fn metrics_match_reference_on_random_instances() {
        let mut rng = crate::rng::Rng::seed_from(62);
        for _ in 0..300 {
            let n = 1 + rng.index(50);
            let gains: Vec<u32> = (0..n).map(|_| rng.below(5) as u32).collect();
            for &k in &[1usize, 5, 10, 50] {
                let (rn, rp, rr) = reference_metrics(&gains, k);
                let relevant = gains.iter().filter(|&&g| g >= 1).count();
                let n_got = ndcg_at_k(&gains, k);
                let (p_got, r_got) = precision_recall_at_k(&gains, k, relevant);
                assert!((n_got - rn).abs() < 1e-12);
                assert!((p_got - rp).abs() < 1e-12);
                assert!((r_got - rr).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&n_got));
                assert!((0.0..=1.0).contains(&p_got) && (0.0..=1.0).contains(&r_got));
            }
        }
    }

    #[test]
    fn recall_nondecreasing_in_k() {
        let gains = [0u32, 1, 0, 4, 2, 0, 1];
        let relevant = gains.iter().filter(|&&g| g >= 1).count();
        let mut prev = 0.0;
        for k in 1..=gains.len() {
            let (_, r) = precision_recall_at_k(&gains, k, relevant);
            assert!(r >= prev);
            prev = r;
        }
    }

    fn pool(grades: &[(&str, FeedbackGrade)]) -> Vec<GradedCandidate> {
        grades
            .iter()
            .map(|(i, g)| GradedCandidate {
                item_id: i.to_string(),
                grade: *g,
            })
            .collect()
    }

    #[test]
    fn replay_with_oracle_scorer_is_perfect() {
        use FeedbackGrade::*;
        let queries = vec![
            EvalQuery::new(
                "q1",
                "switch",
                pool(&[("a", View), ("b", Purchase), ("c", Click)]),
            )
            .unwrap(),
            EvalQuery::new(
                "q2",
                "a much longer query text",
                pool(&[("a", Like), ("b", View)]),
            )
            .unwrap(),
        ];
        let grade_of = |qid: &str, item: &str| -> f64 {
            for q in &queries {
                if q.text == qid {
                    for c in &q.candidates {
                        if c.item_id == item {
                            return f64::from(c.grade.gain());
                        }
                    }
                }
            }
            unreachable!()
        };
        let report =
            replay_evaluate(&queries, |q, i| Ok(grade_of(q, i)), &[1, 3, 5]).unwrap();
        assert_eq!(report.query_count, 2);
        assert_eq!(report.long_count, 1);
        for (_, agg) in &report.per_k {
            assert!((agg.ndcg - 1.0).abs() < 1e-12);
            assert!((agg.ndcg_long - 1.0).abs() < 1e-12);
        }
        assert!(report.skipped.is_empty());
    }

    #[test]
    fn replay_with_negated_oracle_matches_worst_ranking() {
        use FeedbackGrade::*;
        let candidates = pool(&[
            ("a", Purchase),
            ("b", View),
            ("c", Click),
            ("d", View),
            ("e", Like),
        ]);
        let query = EvalQuery::new("q1", "query", candidates.clone()).unwrap();
        let grade_of = |item: &str| -> f64 {
            f64::from(
                candidates
                    .iter()
                    .find(|c| c.item_id == item)
                    .unwrap()
                    .grade
                    .gain(),
            )
        };
        let report =
            replay_evaluate(&[query], |_, i| Ok(-grade_of(i)), &[5]).unwrap();
        // Worst ranking: ascending gains, ties by item id among equals.
        let mut worst: Vec<u32> = candidates.iter().map(|c| c.grade.gain()).collect();
        worst.sort_unstable();
        let expect = ndcg_at_k(&worst, 5);
        let got = report.per_k[&5].ndcg;
        assert!((got - expect).abs() < 1e-12);
        assert!(got < 1.0);
    }

    #[test]
    fn replay_ties_break_by_item_id() {
        use FeedbackGrade::*;
        let query = EvalQuery::new(
            "q1",
            "q",
            pool(&[("zzz", Purchase), ("aaa", View)]),
        )
        .unwrap();
        // Constant scorer: ranking must be aaa (View) then zzz (Purchase).
        let report = replay_evaluate(&[query], |_, _| Ok(0.5), &[2]).unwrap();
        let expect = ndcg_at_k(&[0, 4], 2);
        assert!((report.per_k[&2].ndcg - expect).abs() < 1e-12);
    }

    #[test]
    fn replay_records_skipped_queries() {
        use FeedbackGrade::*;
        let queries = vec![
            EvalQuery::new("good", "q", pool(&[("a", Click), ("b", View)])).unwrap(),
            EvalQuery::new("bad", "q", pool(&[("a", Click), ("missing", View)])).unwrap(),
        ];
        let report = replay_evaluate(
            &queries,
            |_, item| {
                if item == "missing" {
                    Err(Error::Unscorable {
                        query_id: "bad".into(),
                        item_id: item.into(),
                        reason: "not in index".into(),
                    })
                } else {
                    Ok(1.0)
                }
            },
            &[5],
        )
        .unwrap();
        assert_eq!(report.query_count, 1);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].query_id, "bad");
    }

    #[test]
    fn eval_query_rejects_duplicate_items() {
        use FeedbackGrade::*;
        assert!(EvalQuery::new("q", "t", pool(&[("a", View), ("a", Click)])).is_err());
    }

    #[test]
    fn long_flag_counts_characters_not_bytes() {
        let q = EvalQuery::new("q", "あいうえおかきくけこ", vec![]).unwrap();
        assert!(q.is_long()); // 10 chars, 30 bytes
        let q = EvalQuery::new("q", "short", vec![]).unwrap();
        assert!(!q.is_long());
    }

    #[test]
    fn replay_rejects_bad_cutoffs() {
        assert!(replay_evaluate(&[], |_, _| Ok(0.0), &[]).is_err());
        assert!(replay_evaluate(&[], |_, _| Ok(0.0), &[0]).is_err());
    }
}
