//! Contrastive training loop: seeded shuffling, shared-encoder forward pass,
//! exact backpropagation through normalization and the sparse projection,
//! and a lazy Adam optimizer that only touches active feature buckets.
//!
//! Training is single-threaded and bit-deterministic: the same pairs, model
//! seed, and configuration produce bit-identical weights on every run. All
//! loss and gradient arithmetic is f64; weights are cast to f32 only when the
//! final model is materialized.

pub mod loss;

pub use loss::{mnr_loss, mrl_loss, LossReport, MnrOutput, MrlOutput};

use std::collections::HashMap;

use crate::embedding::{NestedDims, ZERO_NORM_EPS};
use crate::encoder::{featurize, EncoderModel, Role, SparseFeatures};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

/// One positive query/title pair.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TrainingPair {
    pub query_text: String,
    pub title_text: String,
}

impl TrainingPair {
    pub fn new(query_text: impl Into<String>, title_text: impl Into<String>) -> Result<Self> {
        let query_text = query_text.into();
        let title_text = title_text.into();
        if query_text.trim().is_empty() || title_text.trim().is_empty() {
            return Err(Error::Config(
                "training pair sides must be non-empty after trimming".into(),
            ));
        }
        Ok(TrainingPair {
            query_text,
            title_text,
        })
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Similarity multiplier s applied to cosines inside the softmax.
    pub scale: f64,
    pub nested: NestedDims,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl TrainingConfig {
    pub fn with_nested(nested: NestedDims) -> Self {
        TrainingConfig {
            batch_size: 64,
            epochs: 1,
            scale: 20.0,
            nested,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }

    pub fn validate(&self, encoder_full_dim: usize) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be >= 2 for in-batch negatives".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Config("scale must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be >= 0".into()));
        }
        if self.nested.full_dim() != encoder_full_dim {
            return Err(Error::Config(format!(
                "nested leading dim {} != encoder full_dim {encoder_full_dim}",
                self.nested.full_dim()
            )));
        }
        if !self.nested.all_weights_positive() {
            return Err(Error::Config(
                "training requires strictly positive nested weights".into(),
            ));
        }
        Ok(())
    }
}

/// Trained model plus per-step loss reports.
#[derive(Debug)]
pub struct TrainResult {
    pub model: EncoderModel,
    pub log: Vec<LossReport>,
}

/// Gradient-check outcome over sampled weight coordinates.
#[derive(Debug, Clone, serde::Serialize)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Forward state for one encoded text: normalized output plus what the
/// backward pass needs.
struct ForwardRow {
    /// Normalized embedding (zero vector when the projection norm is ~0).
    e: Vec<f64>,
    /// Projection norm before normalization.
    r: f64,
    /// 1 / L2 of the raw count vector (0 when there are no features).
    inv_count_norm: f64,
}

/// y = W x_hat for a sparse scaled input; returns the forward row.
fn forward_row(w: &[f64], dim: usize, feats: &SparseFeatures) -> ForwardRow {
    let count_norm = feats.l2();
    let inv_count_norm = if count_norm > 0.0 { 1.0 / count_norm } else { 0.0 };
    let mut y = vec![0.0f64; dim];
    for &(bucket, count) in feats.entries() {
        let x = f64::from(count) * inv_count_norm;
        let col = &w[bucket as usize * dim..(bucket as usize + 1) * dim];
        for (acc, &wv) in y.iter_mut().zip(col) {
            *acc += wv * x;
        }
    }
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e = if r > ZERO_NORM_EPS {
        y.iter().map(|v| v / r).collect()
    } else {
        vec![0.0; dim]
    };
    ForwardRow {
        e,
        r,
        inv_count_norm,
    }
}

/// Scatter dLoss/dEmbedding back through normalization and the projection
/// into per-bucket weight gradients. Accumulation order follows call order,
/// keeping the whole pass deterministic.
fn backprop_row(
    grad: &mut HashMap<u32, Vec<f64>>,
    dim: usize,
    feats: &SparseFeatures,
    row: &ForwardRow,
    dl_de: &[f64],
) {
    if row.r <= ZERO_NORM_EPS {
        return; // zero vector was emitted; flat region, zero gradient
    }
    let projected: f64 = dl_de.iter().zip(&row.e).map(|(g, e)| g * e).sum();
    let mut dl_dy = vec![0.0f64; dim];
    for k in 0..dim {
        dl_dy[k] = (dl_de[k] - projected * row.e[k]) / row.r;
    }
    for &(bucket, count) in feats.entries() {
        let x = f64::from(count) * row.inv_count_norm;
        if x == 0.0 {
            continue;
        }
        let col = grad.entry(bucket).or_insert_with(|| vec![0.0; dim]);
        for (acc, &g) in col.iter_mut().zip(&dl_dy) {
            *acc += g * x;
        }
    }
}

/// Full-batch forward + nested loss + weight gradients.
fn batch_gradients(
    w: &[f64],
    dim: usize,
    batch: &[(&SparseFeatures, &SparseFeatures)],
    config: &TrainingConfig,
) -> Result<(LossReport, HashMap<u32, Vec<f64>>)> {
    let q_rows: Vec<ForwardRow> = batch.iter().map(|(qf, _)| forward_row(w, dim, qf)).collect();
    let t_rows: Vec<ForwardRow> = batch.iter().map(|(_, tf)| forward_row(w, dim, tf)).collect();
    let q_emb: Vec<&[f64]> = q_rows.iter().map(|r| r.e.as_slice()).collect();
    let t_emb: Vec<&[f64]> = t_rows.iter().map(|r| r.e.as_slice()).collect();

    let out = mrl_loss(
        &q_emb,
        &t_emb,
        config.nested.dims(),
        config.nested.weights(),
        config.scale,
    )?;

    let mut grad: HashMap<u32, Vec<f64>> = HashMap::new();
    for (i, (qf, _)) in batch.iter().enumerate() {
        backprop_row(&mut grad, dim, qf, &q_rows[i], &out.grad_q[i]);
    }
    for (i, (_, tf)) in batch.iter().enumerate() {
        backprop_row(&mut grad, dim, tf, &t_rows[i], &out.grad_t[i]);
    }
    Ok((out.report, grad))
}

/// Loss of a batch under given weights, without gradients.
fn batch_loss(
    w: &[f64],
    dim: usize,
    batch: &[(&SparseFeatures, &SparseFeatures)],
    config: &TrainingConfig,
) -> Result<f64> {
    let q_rows: Vec<ForwardRow> = batch.iter().map(|(qf, _)| forward_row(w, dim, qf)).collect();
    let t_rows: Vec<ForwardRow> = batch.iter().map(|(_, tf)| forward_row(w, dim, tf)).collect();
    let q_emb: Vec<&[f64]> = q_rows.iter().map(|r| r.e.as_slice()).collect();
    let t_emb: Vec<&[f64]> = t_rows.iter().map(|r| r.e.as_slice()).collect();
    let out = mrl_loss(
        &q_emb,
        &t_emb,
        config.nested.dims(),
        config.nested.weights(),
        config.scale,
    )?;
    Ok(out.report.total)
}

/// Run the optimizer over the pairs and return the updated model plus the
/// per-step loss log.
pub fn train(
    pairs: &[TrainingPair],
    model: &EncoderModel,
    config: &TrainingConfig,
) -> Result<TrainResult> {
    config.validate(model.full_dim())?;
    if pairs.len() < config.batch_size {
        return Err(Error::Config(format!(
            "{} pairs < batch_size {}",
            pairs.len(),
            config.batch_size
        )));
    }

    let dim = model.full_dim();
    let enc_cfg = model.config();
    // Featurization is deterministic; do it once up front.
    let features: Vec<(SparseFeatures, SparseFeatures)> = pairs
        .iter()
        .map(|p| {
            (
                featurize(&p.query_text, Role::Query, enc_cfg),
                featurize(&p.title_text, Role::Passage, enc_cfg),
            )
        })
        .collect();

    let mut w: Vec<f64> = model.weights().iter().map(|&v| f64::from(v)).collect();
    let mut m = vec![0.0f64; w.len()];
    let mut v = vec![0.0f64; w.len()];
    let mut pow1 = 1.0f64;
    let mut pow2 = 1.0f64;

    let mut shuffle_rng = Rng::seed_from(derive_seed(config.seed, "train-shuffle"));
    let mut log = Vec::new();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        if config.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut batch_index = 0;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                break; // a trailing singleton has no in-batch negative
            }
            let batch: Vec<(&SparseFeatures, &SparseFeatures)> =
                chunk.iter().map(|&i| (&features[i].0, &features[i].1)).collect();
            let (mut report, grad) = batch_gradients(&w, dim, &batch, config)?;
            report.batch_index = batch_index;
            report.epoch = epoch;
            log.push(report);

            // Lazy Adam: moments advance only on coordinates that received
            // gradient this step; bias correction uses the global step.
            pow1 *= config.adam_beta1;
            pow2 *= config.adam_beta2;
            let bc1 = 1.0 - pow1;
            let bc2 = 1.0 - pow2;
            let mut buckets: Vec<u32> = grad.keys().copied().collect();
            buckets.sort_unstable();
            for bucket in buckets {
                let col = &grad[&bucket];
                let base = bucket as usize * dim;
                for k in 0..dim {
                    let g = col[k];
                    let idx = base + k;
                    m[idx] = config.adam_beta1 * m[idx] + (1.0 - config.adam_beta1) * g;
                    v[idx] = config.adam_beta2 * v[idx] + (1.0 - config.adam_beta2) * g * g;
                    let m_hat = m[idx] / bc1;
                    let v_hat = v[idx] / bc2;
                    w[idx] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
                }
            }
            batch_index += 1;
        }
    }

    let w32: Vec<f32> = w.iter().map(|&x| x as f32).collect();
    let model = EncoderModel::from_weights(enc_cfg.clone(), w32)?;
    Ok(TrainResult { model, log })
}

/// Compare analytic weight gradients against central finite differences on
/// randomly sampled active coordinates. Read-only; the model is untouched.
pub fn gradient_check(
    model: &EncoderModel,
    batch: &[TrainingPair],
    config: &TrainingConfig,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Range(format!("step h={h} outside [1e-7, 1e-3]")));
    }
    config.validate(model.full_dim())?;
    if batch.len() < 2 {
        return Err(Error::Config("gradient check needs a batch of >= 2 pairs".into()));
    }

    let dim = model.full_dim();
    let enc_cfg = model.config();
    let features: Vec<(SparseFeatures, SparseFeatures)> = batch
        .iter()
        .map(|p| {
            (
                featurize(&p.query_text, Role::Query, enc_cfg),
                featurize(&p.title_text, Role::Passage, enc_cfg),
            )
        })
        .collect();
    let rows: Vec<(&SparseFeatures, &SparseFeatures)> =
        features.iter().map(|(q, t)| (q, t)).collect();

    let mut w: Vec<f64> = model.weights().iter().map(|&v| f64::from(v)).collect();
    let (_, grad) = batch_gradients(&w, dim, &rows, config)?;

    // Every (bucket, output-dim) coordinate reachable from the batch.
    let mut active: Vec<(u32, usize)> = Vec::new();
    let mut buckets: Vec<u32> = grad.keys().copied().collect();
    buckets.sort_unstable();
    for bucket in &buckets {
        for k in 0..dim {
            active.push((*bucket, k));
        }
    }

    let mut rng = Rng::seed_from(derive_seed(config.seed, "gradient-check"));
    let sample_size = 50.min(active.len());
    let mut sampled = Vec::with_capacity(sample_size);
    if active.len() <= sample_size {
        sampled = active;
    } else {
        // Partial Fisher-Yates for the first sample_size slots.
        for i in 0..sample_size {
            let j = i + rng.index(active.len() - i);
            active.swap(i, j);
            sampled.push(active[i]);
        }
    }

    let mut max_rel_error = 0.0f64;
    for &(bucket, k) in &sampled {
        let idx = bucket as usize * dim + k;
        let analytic = grad[&bucket][k];
        let saved = w[idx];
        w[idx] = saved + h;
        let loss_plus = batch_loss(&w, dim, &rows, config)?;
        w[idx] = saved - h;
        let loss_minus = batch_loss(&w, dim, &rows, config)?;
        w[idx] = saved;
        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        max_rel_error = max_rel_error.max(rel);
    }

    Ok(GradCheckReport {
        coords_checked: sampled.len(),
        max_rel_error,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn tiny_encoder(seed: u64) -> EncoderModel {
        EncoderModel::random_init(EncoderConfig {
            hash_space: 1 << 12,
            full_dim: 16,
            seed,
            ..EncoderConfig::default()
        })
        .unwrap()
    }

    fn tiny_config(seed: u64) -> TrainingConfig {
        let nested = NestedDims::uniform(vec![16, 8, 4]).unwrap();
        TrainingConfig {
            batch_size: 8,
            epochs: 1,
            seed,
            ..TrainingConfig::with_nested(nested)
        }
    }

    /// Clustered synthetic pairs: queries and titles share a topic token.
    fn synthetic_pairs(n: usize, seed: u64) -> Vec<TrainingPair> {
        let mut rng = Rng::seed_from(seed);
        let topics = [
            "violin", "camera", "jacket", "figure", "keyboard", "wallet", "lamp", "sneaker",
        ];
        (0..n)
            .map(|_| {
                let topic = rng.pick(&topics);
                let qualifier = rng.pick(&["mini", "pro", "used", "new", "rare"]);
                TrainingPair::new(
                    format!("{topic} {qualifier}"),
                    format!("{qualifier} {topic} deluxe edition"),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn pair_requires_non_empty_sides() {
        assert!(TrainingPair::new("", "title").is_err());
        assert!(TrainingPair::new("  ", "title").is_err());
        assert!(TrainingPair::new("query", " \t").is_err());
        assert!(TrainingPair::new("q", "t").is_ok());
    }

    #[test]
    fn zero_learning_rate_is_bitwise_noop() {
        let model = tiny_encoder(1);
        let pairs = synthetic_pairs(32, 2);
        let mut cfg = tiny_config(3);
        cfg.learning_rate = 0.0;
        cfg.epochs = 2;
        let result = train(&pairs, &model, &cfg).unwrap();
        let before: Vec<u32> = model.weights().iter().map(|v| v.to_bits()).collect();
        let after: Vec<u32> = result.model.weights().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
        assert!(!result.log.is_empty());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let model = tiny_encoder(4);
        let pairs = synthetic_pairs(64, 5);
        let cfg = TrainingConfig {
            epochs: 2,
            ..tiny_config(6)
        };
        let a = train(&pairs, &model, &cfg).unwrap();
        let b = train(&pairs, &model, &cfg).unwrap();
        let wa: Vec<u32> = a.model.weights().iter().map(|v| v.to_bits()).collect();
        let wb: Vec<u32> = b.model.weights().iter().map(|v| v.to_bits()).collect();
        assert_eq!(wa, wb);
        assert_eq!(a.log.len(), b.log.len());
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
        }
    }

    #[test]
    fn mean_epoch_loss_decreases_early() {
        let model = tiny_encoder(7);
        let pairs = synthetic_pairs(500, 8);
        let cfg = TrainingConfig {
            epochs: 5,
            learning_rate: 3e-3,
            ..tiny_config(9)
        };
        let result = train(&pairs, &model, &cfg).unwrap();
        let mut per_epoch = vec![(0.0f64, 0usize); cfg.epochs];
        for report in &result.log {
            per_epoch[report.epoch].0 += report.total;
            per_epoch[report.epoch].1 += 1;
        }
        let means: Vec<f64> = per_epoch.iter().map(|(s, n)| s / *n as f64).collect();
        assert!(means[0] > means[1], "epoch 0 {} !> epoch 1 {}", means[0], means[1]);
        assert!(means[1] > means[2], "epoch 1 {} !> epoch 2 {}", means[1], means[2]);
    }

    #[test]
    fn insufficient_pairs_is_config_error() {
        let model = tiny_encoder(10);
        let pairs = synthetic_pairs(4, 11);
        let cfg = tiny_config(12); // batch_size 8 > 4 pairs
        assert!(matches!(train(&pairs, &model, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn report_total_matches_weighted_per_dim() {
        let model = tiny_encoder(13);
        let pairs = synthetic_pairs(32, 14);
        let cfg = tiny_config(15);
        let result = train(&pairs, &model, &cfg).unwrap();
        for report in &result.log {
            let recomputed: f64 = report
                .per_dim
                .iter()
                .zip(cfg.nested.weights())
                .map(|(&(_, l), &w)| w * l)
                .sum();
            assert!((report.total - recomputed).abs() < 1e-9);
        }
    }

    #[test]
    fn trailing_sub_two_batch_is_dropped() {
        let model = tiny_encoder(16);
        // 17 pairs at batch 8 -> chunks of 8, 8, 1; the singleton is dropped.
        let pairs = synthetic_pairs(17, 17);
        let mut cfg = tiny_config(18);
        cfg.shuffle = false;
        let result = train(&pairs, &model, &cfg).unwrap();
        assert_eq!(result.log.len(), 2);
    }

    #[test]
    fn gradient_check_passes_at_default_tolerance() {
        let model = tiny_encoder(19);
        let pairs = synthetic_pairs(8, 20);
        let cfg = tiny_config(21);
        let report = gradient_check(&model, &pairs, &cfg, 1e-5, 1e-4).unwrap();
        assert!(report.coords_checked >= 50);
        assert!(
            report.passed,
            "max rel error {} over {} coords",
            report.max_rel_error, report.coords_checked
        );
    }

    #[test]
    fn gradient_check_is_read_only() {
        let model = tiny_encoder(22);
        let before: Vec<u32> = model.weights().iter().map(|v| v.to_bits()).collect();
        let pairs = synthetic_pairs(8, 23);
        let cfg = tiny_config(24);
        gradient_check(&model, &pairs, &cfg, 1e-5, 1e-4).unwrap();
        let after: Vec<u32> = model.weights().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn gradient_check_handles_identical_pairs() {
        let model = tiny_encoder(25);
        let pair = TrainingPair::new("switch console", "nintendo switch console").unwrap();
        let pairs = vec![pair.clone(), pair.clone(), pair.clone(), pair];
        let cfg = tiny_config(26);
        let report = gradient_check(&model, &pairs, &cfg, 1e-5, 1e-4).unwrap();
        assert!(report.max_rel_error.is_finite());
        assert!(report.passed);
    }

    #[test]
    fn gradient_check_rejects_bad_step() {
        let model = tiny_encoder(27);
        let pairs = synthetic_pairs(4, 28);
        let cfg = tiny_config(29);
        assert!(matches!(
            gradient_check(&model, &pairs, &cfg, 1e-2, 1e-4),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            gradient_check(&model, &pairs, &cfg, 1e-8, 1e-4),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn seeded_random_configurations_pass_gradient_check() {
        // Smaller version of the acceptance sweep: varied dims and scales.
        for case in 0u64..5 {
            let enc = EncoderModel::random_init(EncoderConfig {
                hash_space: 1 << 10,
                full_dim: 8 + (case as usize % 3) * 4,
                seed: 100 + case,
                ..EncoderConfig::default()
            })
            .unwrap();
            let full = enc.full_dim();
            let nested = NestedDims::uniform(vec![full, full / 2]).unwrap();
            let cfg = TrainingConfig {
                batch_size: 4,
                scale: 5.0 + case as f64 * 7.0,
                seed: 200 + case,
                ..TrainingConfig::with_nested(nested)
            };
            let pairs = synthetic_pairs(6, 300 + case);
            let report = gradient_check(&enc, &pairs, &cfg, 1e-5, 1e-4).unwrap();
            assert!(report.passed, "case {case}: {}", report.max_rel_error);
        }
    }
}
