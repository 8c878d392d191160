//! Model-vs-model comparison of metric reports.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::eval::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricDelta {
    pub baseline: f64,
    pub candidate: f64,
    pub absolute: f64,
    /// (candidate - baseline) / baseline; None when the baseline is 0.
    pub relative: Option<f64>,
}

impl MetricDelta {
    fn new(baseline: f64, candidate: f64) -> Self {
        MetricDelta {
            baseline,
            candidate,
            absolute: candidate - baseline,
            relative: if baseline != 0.0 {
                Some((candidate - baseline) / baseline)
            } else {
                None
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeltaReport {
    pub ks: Vec<usize>,
    pub query_count: usize,
    /// k -> metric name -> delta. Metric names: ndcg, ndcg_long, precision,
    /// recall.
    pub per_k: BTreeMap<usize, BTreeMap<String, MetricDelta>>,
}

impl DeltaReport {
    /// Aligned text table; relative deltas shown as signed percent with one
    /// decimal.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:>6}  {:<10} {:>10} {:>10} {:>10} {:>9}\n",
            "k", "metric", "baseline", "candidate", "abs", "rel"
        ));
        for (k, metrics) in &self.per_k {
            for (name, d) in metrics {
                let rel = match d.relative {
                    Some(r) => format!("{:+.1}%", r * 100.0),
                    None => "n/a".to_string(),
                };
                out.push_str(&format!(
                    "{k:>6}  {name:<10} {:>10.5} {:>10.5} {:>+10.5} {rel:>9}\n",
                    d.baseline, d.candidate, d.absolute
                ));
            }
        }
        out
    }
}

/// Per-metric absolute and relative deltas between two reports over the
/// same query set and cutoffs.
pub fn compare_models(baseline: &MetricReport, candidate: &MetricReport) -> Result<DeltaReport> {
    if baseline.ks != candidate.ks {
        return Err(Error::Comparison(format!(
            "cutoffs differ: {:?} vs {:?}",
            baseline.ks, candidate.ks
        )));
    }
    let ids = |r: &MetricReport| -> Vec<String> {
        let mut v: Vec<String> = r.per_query.iter().map(|q| q.query_id.clone()).collect();
        v.sort_unstable();
        v
    };
    if ids(baseline) != ids(candidate) {
        return Err(Error::Comparison("query sets differ".into()));
    }

    let mut per_k = BTreeMap::new();
    for &k in &baseline.ks {
        let a = &baseline.per_k[&k];
        let b = &candidate.per_k[&k];
        let mut metrics = BTreeMap::new();
        metrics.insert("ndcg".to_string(), MetricDelta::new(a.ndcg, b.ndcg));
        metrics.insert(
            "ndcg_long".to_string(),
            MetricDelta::new(a.ndcg_long, b.ndcg_long),
        );
        metrics.insert(
            "precision".to_string(),
            MetricDelta::new(a.precision, b.precision),
        );
        metrics.insert("recall".to_string(), MetricDelta::new(a.recall, b.recall));
        per_k.insert(k, metrics);
    }
    Ok(DeltaReport {
        ks: baseline.ks.clone(),
        query_count: baseline.query_count,
        per_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{replay_evaluate, EvalQuery, FeedbackGrade, GradedCandidate};

    fn report(score_flip: f64) -> MetricReport {
        use FeedbackGrade::*;
        let cand = |id: &str, grade| GradedCandidate {
            item_id: id.to_string(),
            grade,
        };
        let queries = vec![
            EvalQuery::new(
                "q1",
                "text one",
                vec![cand("a", Purchase), cand("b", View), cand("c", Click)],
            )
            .unwrap(),
            EvalQuery::new("q2", "text two", vec![cand("a", Like), cand("b", View)]).unwrap(),
        ];
        let grades: std::collections::HashMap<&str, f64> =
            [("a", 4.0), ("b", 0.0), ("c", 1.0)].into();
        replay_evaluate(&queries, |_, item| Ok(grades[item] * score_flip), &[1, 3]).unwrap()
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let a = report(1.0);
        let delta = compare_models(&a, &a).unwrap();
        for metrics in delta.per_k.values() {
            for d in metrics.values() {
                assert_eq!(d.absolute, 0.0);
                if let Some(r) = d.relative {
                    assert_eq!(r, 0.0);
                }
            }
        }
    }

    #[test]
    fn relative_deltas_match_reported_improvements() {
        // 0.198 -> 0.213 is +7.6% (one decimal); 0.099 -> 0.195 is +97%.
        let d = MetricDelta::new(0.198, 0.213);
        let rel = d.relative.unwrap();
        assert!((rel - 0.0757575757).abs() < 1e-6);
        assert_eq!(format!("{:+.1}%", rel * 100.0), "+7.6%");
        let d = MetricDelta::new(0.099, 0.195);
        assert!((d.relative.unwrap() - 0.9696969696).abs() < 1e-6);
        assert!(d.relative.unwrap() > 0.9); // the "nearly 2x" regime
    }

    #[test]
    fn mismatched_query_sets_are_rejected() {
        let a = report(1.0);
        let mut b = report(1.0);
        b.per_query[0].query_id = "renamed".into();
        assert!(matches!(
            compare_models(&a, &b),
            Err(Error::Comparison(_))
        ));
    }

    #[test]
    fn mismatched_ks_are_rejected() {
        let a = report(1.0);
        let mut b = report(1.0);
        b.ks = vec![1];
        assert!(matches!(compare_models(&a, &b), Err(Error::Comparison(_))));
    }

    #[test]
    fn table_renders_every_metric_row() {
        let a = report(1.0);
        let b = report(-1.0);
        let delta = compare_models(&a, &b).unwrap();
        let text = delta.render_text();
        for name in ["ndcg", "ndcg_long", "precision", "recall"] {
            assert!(text.contains(name));
        }
        // One row per (k, metric).
        assert_eq!(text.lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn json_round_trip() {
        let delta = compare_models(&report(1.0), &report(-1.0)).unwrap();
        let json = serde_json::to_string(&delta).unwrap();
        let back: DeltaReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, delta);
    }
}
