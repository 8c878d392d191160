//! Hybrid lexical + dense retrieval.
//!
//! Lexical BM25 and exact dense search run over the same item collection;
//! hybrid blending unions the lexical top-k with dense candidates whose
//! cosine passes a strict similarity gate (default 0.90). The
//! diagnostics record zero-/low-hit status and whether dense candidates
//! recovered the result page. Indexes are build-then-frozen and safe to
//! share across concurrent searches.

pub mod dense;
pub mod lexical;
pub mod tokenize;

pub use dense::DenseIndex;
pub use lexical::{LexicalIndex, DEFAULT_B, DEFAULT_K1};
pub use tokenize::tokenize;

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// One indexed item.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ItemDoc {
    pub item_id: String,
    pub title: String,
}

impl ItemDoc {
    pub fn new(item_id: impl Into<String>, title: impl Into<String>) -> Result<Self> {
        let item_id = item_id.into();
        let title = title.into();
        if title.trim().is_empty() {
            return Err(Error::Config(format!("item {item_id} has an empty title")));
        }
        Ok(ItemDoc { item_id, title })
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HybridConfig {
    /// Dense candidates join only with cosine strictly greater than tau.
    pub tau: f64,
    pub lexical_k: usize,
    pub dense_k: usize,
    /// A SERP with fewer lexical matches than this (but more than zero) is
    /// low-hit.
    pub low_hit_threshold: usize,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            tau: 0.90,
            lexical_k: 100,
            dense_k: 100,
            low_hit_threshold: 10,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.lexical_k == 0 || self.dense_k == 0 {
            return Err(Error::Config("candidate depths must be >= 1".into()));
        }
        if self.low_hit_threshold == 0 {
            return Err(Error::Config("low_hit_threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Lexical,
    Dense,
    Both,
}

/// A merged candidate. Absent scores stay `None`, never 0.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RankedCandidate {
    pub item_id: String,
    pub lexical_score: Option<f64>,
    pub dense_score: Option<f64>,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HybridDiagnostics {
    /// Total number of documents matching at least one query term (not
    /// capped at lexical_k).
    pub lexical_hit_count: usize,
    pub zero_hit: bool,
    pub low_hit: bool,
    /// Dense candidates that passed the tau gate.
    pub dense_gate_passed: usize,
    /// Gate-passing candidates that were not already lexical hits.
    pub dense_only_added: usize,
    /// Zero-hit: at least one dense-only candidate arrived. Low-hit: the
    /// merged candidate count reached the threshold. False when the page
    /// needed no recovery.
    pub recovered: bool,
}

/// Union-merge lexical top-k with gate-passing dense candidates.
///
/// Candidate order is lexical rank order followed by dense-only candidates
/// in dense rank order; overlapping items keep their lexical position with
/// `source = Both`. Scoring beyond this point belongs to downstream ranking
/// features.
pub fn hybrid_search(
    lexical: &LexicalIndex,
    dense: &DenseIndex,
    query_text: &str,
    query_embedding: &Embedding,
    config: &HybridConfig,
) -> Result<(Vec<RankedCandidate>, HybridDiagnostics)> {
    config.validate()?;
    let (lex_hits, lexical_hit_count) =
        lexical.search_with_match_count(query_text, config.lexical_k);
    let dense_hits = dense.search(query_embedding, config.dense_k)?;

    let mut candidates: Vec<RankedCandidate> = lex_hits
        .into_iter()
        .map(|(item_id, score)| RankedCandidate {
            item_id,
            lexical_score: Some(score),
            dense_score: None,
            source: CandidateSource::Lexical,
        })
        .collect();
    let mut by_id: std::collections::HashMap<String, usize> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.item_id.clone(), i))
        .collect();

    let mut dense_gate_passed = 0;
    let mut dense_only_added = 0;
    for (item_id, score) in dense_hits {
        if !(score > config.tau) {
            continue; // strict inequality: a score exactly at tau is out
        }
        dense_gate_passed += 1;
        if let Some(&i) = by_id.get(&item_id) {
            candidates[i].dense_score = Some(score);
            candidates[i].source = CandidateSource::Both;
        } else {
            by_id.insert(item_id.clone(), candidates.len());
            candidates.push(RankedCandidate {
                item_id,
                lexical_score: None,
                dense_score: Some(score),
                source: CandidateSource::Dense,
            });
            dense_only_added += 1;
        }
    }

    let zero_hit = lexical_hit_count == 0;
    let low_hit = !zero_hit && lexical_hit_count < config.low_hit_threshold;
    let recovered = if zero_hit {
        dense_only_added >= 1
    } else if low_hit {
        candidates.len() >= config.low_hit_threshold
    } else {
        false
    };

    Ok((
        candidates,
        HybridDiagnostics {
            lexical_hit_count,
            zero_hit,
            low_hit,
            dense_gate_passed,
            dense_only_added,
            recovered,
        },
    ))
}

/// Ranking features for one candidate: full-dim cosine, then the query and
/// candidate embeddings truncated-and-renormalized to the dim budget.
/// Layout: [cosine, q_0..q_budget, t_0..t_budget], length 1 + 2*budget.
pub fn extract_ltr_features(
    query: &Embedding,
    candidates: &[Embedding],
    dim_budget: usize,
) -> Result<Vec<Vec<f64>>> {
    let q_trunc = query.truncate(dim_budget, true)?;
    candidates
        .iter()
        .map(|t| {
            let cos = query.cosine(t)?;
            let t_trunc = t.truncate(dim_budget, true)?;
            let mut features = Vec::with_capacity(1 + 2 * dim_budget);
            features.push(cos);
            features.extend_from_slice(q_trunc.values());
            features.extend_from_slice(t_trunc.values());
            Ok(features)
        })
        .collect()
}
