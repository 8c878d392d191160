//! In-batch-negatives contrastive loss and its nested-dimension wrapper,
//! with exact analytic gradients.
//!
//! For a batch of B query/title embedding pairs the base loss is softmax
//! cross-entropy over scaled cosine similarities, where every non-matching
//! title in the batch serves as a negative:
//!
//! loss = (1/B) sum_i -log( exp(s*cos(q_i,t_i)) / sum_j exp(s*cos(q_i,t_j)) )
//!
//! The nested wrapper evaluates the same loss on the leading d_k coordinates
//! of both sides (no renormalization; the internal cosine handles prefix
//! norms) and aggregates with per-level weights. Gradients are exact partials
//! through the softmax, the cosine (including its norm terms), and the
//! prefix truncation: coordinates beyond d_k receive no contribution from
//! level k. All arithmetic is f64 with row-stable logsumexp.

use crate::embedding::ZERO_NORM_EPS;
use crate::error::{Error, Result};

/// Loss value plus gradients w.r.t. every query and title row.
#[derive(Debug, Clone)]
pub struct MnrOutput {
    pub loss: f64,
    pub grad_q: Vec<Vec<f64>>,
    pub grad_t: Vec<Vec<f64>>,
}

/// Per-step loss breakdown across nested dims.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// (d_k, unweighted loss at that dim).
    pub per_dim: Vec<(usize, f64)>,
    pub batch_index: usize,
    pub epoch: usize,
}

/// Nested loss output: report plus full-dimension gradients.
#[derive(Debug, Clone)]
pub struct MrlOutput {
    pub report: LossReport,
    pub grad_q: Vec<Vec<f64>>,
    pub grad_t: Vec<Vec<f64>>,
}

fn check_batch<Q: AsRef<[f64]>, T: AsRef<[f64]>>(q: &[Q], t: &[T]) -> Result<usize> {
    if q.len() != t.len() {
        return Err(Error::Shape(format!(
            "query batch {} vs title batch {}",
            q.len(),
            t.len()
        )));
    }
    if q.len() < 2 {
        return Err(Error::Config(format!(
            "in-batch negatives need batch size >= 2, got {}",
            q.len()
        )));
    }
    let dim = q[0].as_ref().len();
    for row in q.iter().map(AsRef::as_ref).chain(t.iter().map(AsRef::as_ref)) {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "ragged batch: expected dim {dim}, got {}",
                row.len()
            )));
        }
    }
    Ok(dim)
}

/// Base contrastive loss at full dimension. Rows need not be unit norm.
pub fn mnr_loss<Q: AsRef<[f64]>, T: AsRef<[f64]>>(
    q: &[Q],
    t: &[T],
    scale: f64,
) -> Result<MnrOutput> {
    let dim = check_batch(q, t)?;
    let (loss, grad_q, grad_t) = mnr_at_dim(q, t, dim, scale);
    Ok(MnrOutput {
        loss,
        grad_q,
        grad_t,
    })
}

/// Nested wrapper: weighted sum of the base loss over leading-prefix dims.
///
/// `dims` must be strictly decreasing with `dims[0]` equal to the embedding
/// dimension. Zero weights are allowed and contribute nothing.
pub fn mrl_loss<Q: AsRef<[f64]>, T: AsRef<[f64]>>(
    q: &[Q],
    t: &[T],
    dims: &[usize],
    weights: &[f64],
    scale: f64,
) -> Result<MrlOutput> {
    let full_dim = check_batch(q, t)?;
    if dims.is_empty() || dims.len() != weights.len() {
        return Err(Error::Config(format!(
            "{} dims vs {} weights",
            dims.len(),
            weights.len()
        )));
    }
    if dims[0] != full_dim {
        return Err(Error::Shape(format!(
            "leading nested dim {} != embedding dim {full_dim}",
            dims[0]
        )));
    }
    if dims.windows(2).any(|w| w[0] <= w[1]) || dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!(
            "nested dims must be strictly decreasing and >= 1, got {dims:?}"
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Config("nested weights must be finite and >= 0".into()));
    }

    let batch = q.len();
    let mut grad_q = vec![vec![0.0; full_dim]; batch];
    let mut grad_t = vec![vec![0.0; full_dim]; batch];
    let mut per_dim = Vec::with_capacity(dims.len());
    let mut total = 0.0;

    for (&d, &w) in dims.iter().zip(weights) {
        let (loss_k, gq_k, gt_k) = mnr_at_dim(q, t, d, scale);
        per_dim.push((d, loss_k));
        total += w * loss_k;
        if w != 0.0 {
            for (acc, g) in grad_q.iter_mut().zip(&gq_k) {
                for (a, v) in acc[..d].iter_mut().zip(g) {
                    *a += w * v;
                }
            }
            for (acc, g) in grad_t.iter_mut().zip(&gt_k) {
                for (a, v) in acc[..d].iter_mut().zip(g) {
                    *a += w * v;
                }
            }
        }
    }

    Ok(MrlOutput {
        report: LossReport {
            total,
            per_dim,
            batch_index: 0,
            epoch: 0,
        },
        grad_q,
        grad_t,
    })
}

/// Core loss + gradients restricted to the leading `d` coordinates.
///
/// Returned gradients have length `d`. Rows whose prefix norm is ~0 are
/// treated as cosine 0 with zero gradient (flat extension of the guard).
fn mnr_at_dim<Q: AsRef<[f64]>, T: AsRef<[f64]>>(
    q: &[Q],
    t: &[T],
    d: usize,
    scale: f64,
) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let b = q.len();
    let norm = |row: &[f64]| row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rq: Vec<f64> = q.iter().map(|r| norm(&r.as_ref()[..d])).collect();
    let rt: Vec<f64> = t.iter().map(|r| norm(&r.as_ref()[..d])).collect();

    // Cosine matrix with zero-norm guard.
    let mut cos = vec![vec![0.0f64; b]; b];
    for i in 0..b {
        if rq[i] <= ZERO_NORM_EPS {
            continue;
        }
        let qi = &q[i].as_ref()[..d];
        for j in 0..b {
            if rt[j] <= ZERO_NORM_EPS {
                continue;
            }
            let tj = &t[j].as_ref()[..d];
            let dot: f64 = qi.iter().zip(tj).map(|(a, b)| a * b).sum();
            cos[i][j] = dot / (rq[i] * rt[j]);
        }
    }

    // Row-stable softmax cross-entropy against the diagonal. The loss per
    // row is written as ln(sum exp(z - max)) + (max - z_ii): when the
    // diagonal holds the row max the second term cancels exactly, which
    // keeps finite-difference checks noise-free on degenerate batches.
    let mut loss = 0.0;
    let mut probs = vec![vec![0.0f64; b]; b];
    for i in 0..b {
        let row_max = cos[i]
            .iter()
            .map(|c| scale * c)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..b {
            let e = (scale * cos[i][j] - row_max).exp();
            probs[i][j] = e;
            denom += e;
        }
        loss += denom.ln() + (row_max - scale * cos[i][i]);
        for p in probs[i].iter_mut() {
            *p /= denom;
        }
    }
    loss /= b as f64;

    // grad wrt logits: (p - I)/B; chain through cosine norm terms.
    let mut grad_q = vec![vec![0.0f64; d]; b];
    let mut grad_t = vec![vec![0.0f64; d]; b];
    let inv_b = 1.0 / b as f64;
    for i in 0..b {
        if rq[i] <= ZERO_NORM_EPS {
            continue;
        }
        let qi = &q[i].as_ref()[..d];
        for j in 0..b {
            if rt[j] <= ZERO_NORM_EPS {
                continue;
            }
            let tj = &t[j].as_ref()[..d];
            let g = (probs[i][j] - if i == j { 1.0 } else { 0.0 }) * inv_b * scale;
            if g == 0.0 {
                continue;
            }
            let inv_cross = 1.0 / (rq[i] * rt[j]);
            let cq = cos[i][j] / (rq[i] * rq[i]);
            let ct = cos[i][j] / (rt[j] * rt[j]);
            for k in 0..d {
                grad_q[i][k] += g * (tj[k] * inv_cross - cq * qi[k]);
                grad_t[j][k] += g * (qi[k] * inv_cross - ct * tj[k]);
            }
        }
    }

    (loss, grad_q, grad_t)
}
