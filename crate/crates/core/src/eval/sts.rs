//! Sentence-pair similarity harness.
//!
//! Encodes both sentences with the passage role (the task is symmetric),
//! truncates-renormalizes to each requested dim, and correlates cosine
//! against the gold scores.

use crate::encoder::{EncoderModel, Role};
use crate::error::{Error, Result};
use crate::eval::correlation::{pearson, spearman};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: f64,
}

impl StsPair {
    pub fn new(
        sentence_a: impl Into<String>,
        sentence_b: impl Into<String>,
        gold: f64,
    ) -> Result<Self> {
        if !gold.is_finite() {
            return Err(Error::Config("gold score must be finite".into()));
        }
        Ok(StsPair {
            sentence_a: sentence_a.into(),
            sentence_b: sentence_b.into(),
            gold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StsDimResult {
    pub dim: usize,
    pub pearson: f64,
    pub spearman: f64,
}

/// Correlations between model cosine and gold at each truncation dim.
pub fn sts_evaluate(
    pairs: &[StsPair],
    model: &EncoderModel,
    dims: &[usize],
) -> Result<Vec<StsDimResult>> {
    if pairs.len() < 2 {
        return Err(Error::Config("sts evaluation needs at least 2 pairs".into()));
    }
    let full_dim = model.full_dim();
    if dims.is_empty() || dims.iter().any(|&d| d == 0 || d > full_dim) {
        return Err(Error::Config(format!(
            "dims {dims:?} outside [1, {full_dim}]"
        )));
    }

    let embedded: Vec<_> = pairs
        .iter()
        .map(|p| {
            (
                model.encode(&p.sentence_a, Role::Passage),
                model.encode(&p.sentence_b, Role::Passage),
            )
        })
        .collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();

    let mut results = Vec::with_capacity(dims.len());
    for &dim in dims {
        let mut sims = Vec::with_capacity(pairs.len());
        for (a, b) in &embedded {
            let ta = a.truncate(dim, true)?;
            let tb = b.truncate(dim, true)?;
            sims.push(ta.cosine(&tb)?);
        }
        results.push(StsDimResult {
            dim,
            pearson: pearson(&sims, &gold)?,
            spearman: spearman(&sims, &gold)?,
        });
    }
    Ok(results)
}
