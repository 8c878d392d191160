//! PCA compression baseline.
//!
//! Centers the fit corpus, eigendecomposes the sample covariance (n-1
//! denominator), and keeps the top components as the projection. Component
//! signs are canonicalized (largest-magnitude coordinate positive) so fits
//! are deterministic across runs on identical input order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

const MPCA_MAGIC: &[u8; 4] = b"MPCA";
const MPCA_VERSION: u8 = 1;

/// Fitted projection: mean, orthonormal component rows, and per-component
/// explained variance sorted non-increasing.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Vec<f64>,
    /// target_dim rows of input_dim values.
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn target_dim(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Project a vector: components . (e - mean), optionally renormalized.
    pub fn transform(&self, e: &Embedding, renormalize: bool) -> Result<Embedding> {
        if e.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "pca input dim {} but embedding dim {}",
                self.input_dim(),
                e.dim()
            )));
        }
        let centered: Vec<f64> = e
            .values()
            .iter()
            .zip(&self.mean)
            .map(|(v, m)| v - m)
            .collect();
        let projected: Vec<f64> = self
            .components
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect();
        let emb = Embedding::new(projected)?;
        Ok(if renormalize { emb.l2_normalized() } else { emb })
    }

    /// Map a projected vector back into the input space.
    pub fn inverse_transform(&self, e: &Embedding) -> Result<Embedding> {
        if e.dim() != self.target_dim() {
            return Err(Error::Shape(format!(
                "pca target dim {} but embedding dim {}",
                self.target_dim(),
                e.dim()
            )));
        }
        let mut out = self.mean.clone();
        for (coeff, row) in e.values().iter().zip(&self.components) {
            for (acc, v) in out.iter_mut().zip(row) {
                *acc += coeff * v;
            }
        }
        Embedding::new(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(MPCA_MAGIC).map_err(io_err)?;
        w.write_all(&[MPCA_VERSION]).map_err(io_err)?;
        w.write_all(&(self.input_dim() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.target_dim() as u32).to_le_bytes()).map_err(io_err)?;
        for v in &self.mean {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
        }
        for row in &self.components {
            for v in row {
                w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
            }
        }
        for v in &self.explained_variance {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MPCA_MAGIC {
            return Err(Error::format(path, "bad magic, expected MPCA"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(io_err)?;
        if version[0] != MPCA_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version[0])));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(io_err)?;
        let input_dim = u32::from_le_bytes(buf4) as usize;
        r.read_exact(&mut buf4).map_err(io_err)?;
        let target_dim = u32::from_le_bytes(buf4) as usize;
        if input_dim == 0 || target_dim == 0 || target_dim > input_dim {
            return Err(Error::format(path, "inconsistent dims"));
        }
        let read_f32 = |r: &mut BufReader<File>| -> Result<f64> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
            Ok(f64::from(f32::from_le_bytes(b)))
        };
        let mut mean = Vec::with_capacity(input_dim);
        for _ in 0..input_dim {
            mean.push(read_f32(&mut r)?);
        }
        let mut components = Vec::with_capacity(target_dim);
        for _ in 0..target_dim {
            let mut row = Vec::with_capacity(input_dim);
            for _ in 0..input_dim {
                row.push(read_f32(&mut r)?);
            }
            components.push(row);
        }
        let mut explained_variance = Vec::with_capacity(target_dim);
        for _ in 0..target_dim {
            explained_variance.push(read_f32(&mut r)?);
        }
        Ok(PcaModel {
            mean,
            components,
            explained_variance,
        })
    }
}

/// Fit PCA on a corpus of same-dimension embeddings.
///
/// Requires more samples than target dims. Rank-deficient input is fine: the
/// eigenbasis of the covariance completes orthonormally and the surplus
/// components carry explained variance 0.
pub fn pca_fit(data: &[Embedding], target_dim: usize) -> Result<PcaModel> {
    if data.is_empty() {
        return Err(Error::Config("pca fit needs data".into()));
    }
    let input_dim = data[0].dim();
    if data.iter().any(|e| e.dim() != input_dim) {
        return Err(Error::Shape("pca fit data has mixed dims".into()));
    }
    if target_dim == 0 || target_dim > input_dim {
        return Err(Error::Config(format!(
            "target dim {target_dim} outside [1, {input_dim}]"
        )));
    }
    if data.len() <= target_dim {
        return Err(Error::Config(format!(
            "{} samples insufficient for target dim {target_dim}",
            data.len()
        )));
    }

    let n = data.len();
    let mut mean = vec![0.0f64; input_dim];
    for e in data {
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Sample covariance, n-1 denominator.
    let mut cov = DMatrix::<f64>::zeros(input_dim, input_dim);
    let mut centered = vec![0.0f64; input_dim];
    for e in data {
        for ((c, v), m) in centered.iter_mut().zip(e.values()).zip(&mean) {
            *c = v - m;
        }
        for i in 0..input_dim {
            let ci = centered[i];
            for j in i..input_dim {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..input_dim {
        for j in i..input_dim {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..input_dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(target_dim);
    let mut explained_variance = Vec::with_capacity(target_dim);
    for &col in order.iter().take(target_dim) {
        let mut row: Vec<f64> = (0..input_dim).map(|i| eig.eigenvectors[(i, col)]).collect();
        // Canonical sign: largest-magnitude coordinate positive.
        let mut pivot = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[pivot].abs() {
                pivot = i;
            }
        }
        if row[pivot] < 0.0 {
            for v in &mut row {
                *v = -*v;
            }
        }
        components.push(row);
        explained_variance.push(eig.eigenvalues[col].max(0.0));
    }

    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f64]) -> Embedding {
        Embedding::new(values.to_vec()).unwrap()
    }

    fn collinear_points() -> Vec<Embedding> {
        vec![
            emb(&[1.0, 1.0]),
            emb(&[-1.0, -1.0]),
            emb(&[2.0, 2.0]),
            emb(&[-2.0, -2.0]),
        ]
    }

    #[test]
    fn collinear_fit_recovers_diagonal_direction() {
        let model = pca_fit(&collinear_points(), 1).unwrap();
        let c = &model.components()[0];
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c[0] - inv_sqrt2).abs() < 1e-9);
        assert!((c[1] - inv_sqrt2).abs() < 1e-9);
        // Projected values are +-sqrt2, +-2sqrt2 around mean zero; with the
        // n-1 denominator the sample variance is 20/3.
        assert!((model.explained_variance()[0] - 20.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn transform_of_mean_is_zero_and_projection_matches() {
        let model = pca_fit(&collinear_points(), 1).unwrap();
        let mean = emb(model.mean());
        let at_mean = model.transform(&mean, false).unwrap();
        assert!(at_mean.values()[0].abs() < 1e-12);
        let projected = model.transform(&emb(&[2.0, 2.0]), false).unwrap();
        assert!((projected.values()[0] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn full_dim_fit_reconstructs() {
        let mut rng = crate::rng::Rng::seed_from(31);
        let data: Vec<Embedding> = (0..40)
            .map(|_| emb(&(0..6).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>()))
            .collect();
        let model = pca_fit(&data, 6).unwrap();
        for e in &data {
            let round = model
                .inverse_transform(&model.transform(e, false).unwrap())
                .unwrap();
            for (a, b) in round.values().iter().zip(e.values()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn identical_points_have_zero_variance_and_zero_projection() {
        let data: Vec<Embedding> = (0..5).map(|_| emb(&[0.3, -0.2, 0.9])).collect();
        let model = pca_fit(&data, 2).unwrap();
        for v in model.explained_variance() {
            assert!(v.abs() < 1e-9);
        }
        let t = model.transform(&emb(&[0.3, -0.2, 0.9]), false).unwrap();
        assert!(t.values().iter().all(|v| v.abs() < 1e-9));
        // Components are still orthonormal despite zero variance.
        let c = model.components();
        for row in c {
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn components_are_orthonormal() {
        let mut rng = crate::rng::Rng::seed_from(32);
        let data: Vec<Embedding> = (0..60)
            .map(|_| emb(&(0..8).map(|_| rng.uniform(-2.0, 2.0)).collect::<Vec<_>>()))
            .collect();
        let model = pca_fit(&data, 5).unwrap();
        let c = model.components();
        for i in 0..c.len() {
            for j in 0..c.len() {
                let dot: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-6, "({i},{j}) dot {dot}");
            }
        }
    }

    #[test]
    fn explained_variance_equals_projected_coordinate_variance() {
        let mut rng = crate::rng::Rng::seed_from(33);
        let data: Vec<Embedding> = (0..100)
            .map(|_| {
                emb(&(0..4)
                    .map(|k| rng.uniform(-1.0, 1.0) * (k + 1) as f64)
                    .collect::<Vec<_>>())
            })
            .collect();
        let model = pca_fit(&data, 4).unwrap();
        let projected: Vec<Vec<f64>> = data
            .iter()
            .map(|e| model.transform(e, false).unwrap().values().to_vec())
            .collect();
        for k in 0..4 {
            let mean: f64 = projected.iter().map(|p| p[k]).sum::<f64>() / data.len() as f64;
            let var: f64 = projected
                .iter()
                .map(|p| (p[k] - mean).powi(2))
                .sum::<f64>()
                / (data.len() - 1) as f64;
            assert!(
                (var - model.explained_variance()[k]).abs() < 1e-6,
                "component {k}: {} vs {}",
                var,
                model.explained_variance()[k]
            );
        }
        // Sorted non-increasing.
        for pair in model.explained_variance().windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12);
        }
    }

    #[test]
    fn span_isometry() {
        // Points in a 2-D subspace of 5-D; pairwise distances survive the
        // projection to 2 components.
        let mut rng = crate::rng::Rng::seed_from(34);
        let basis = [
            [1.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, -1.0, 0.0],
        ];
        let data: Vec<Embedding> = (0..30)
            .map(|_| {
                let a = rng.uniform(-1.0, 1.0);
                let b = rng.uniform(-1.0, 1.0);
                emb(&(0..5)
                    .map(|k| a * basis[0][k] + b * basis[1][k])
                    .collect::<Vec<_>>())
            })
            .collect();
        let model = pca_fit(&data, 2).unwrap();
        let proj: Vec<Vec<f64>> = data
            .iter()
            .map(|e| model.transform(e, false).unwrap().values().to_vec())
            .collect();
        for i in (0..data.len()).step_by(5) {
            for j in (i + 1..data.len()).step_by(7) {
                let d_orig: f64 = data[i]
                    .values()
                    .iter()
                    .zip(data[j].values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let d_proj: f64 = proj[i]
                    .iter()
                    .zip(&proj[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((d_orig - d_proj).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = crate::rng::Rng::seed_from(35);
        let data: Vec<Embedding> = (0..50)
            .map(|_| emb(&(0..6).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>()))
            .collect();
        let a = pca_fit(&data, 3).unwrap();
        let b = pca_fit(&data, 3).unwrap();
        assert_eq!(a.components(), b.components());
        assert_eq!(a.explained_variance(), b.explained_variance());
    }

    #[test]
    fn insufficient_samples_is_config_error() {
        let data = vec![emb(&[1.0, 2.0]), emb(&[2.0, 1.0])];
        assert!(matches!(pca_fit(&data, 2), Err(Error::Config(_))));
    }

    #[test]
    fn transform_dim_mismatch_is_shape_error() {
        let model = pca_fit(&collinear_points(), 1).unwrap();
        assert!(matches!(
            model.transform(&emb(&[1.0, 2.0, 3.0]), false),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn transformed_cosine_of_identical_inputs_is_one() {
        let mut rng = crate::rng::Rng::seed_from(36);
        let data: Vec<Embedding> = (0..20)
            .map(|_| emb(&(0..4).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>()))
            .collect();
        let model = pca_fit(&data, 2).unwrap();
        let t1 = model.transform(&data[0], true).unwrap();
        let t2 = model.transform(&data[0], true).unwrap();
        assert!((t1.cosine(&t2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mpca_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.mpca");
        let model = pca_fit(&collinear_points(), 1).unwrap();
        model.write(&path).unwrap();
        let back = PcaModel::read(&path).unwrap();
        assert_eq!(back.input_dim(), 2);
        assert_eq!(back.target_dim(), 1);
        for (a, b) in back.components()[0].iter().zip(&model.components()[0]) {
            assert!((a - b).abs() < 1e-6);
        }
        let e = emb(&[2.0, 2.0]);
        let t_orig = model.transform(&e, true).unwrap();
        let t_back = back.transform(&e, true).unwrap();
        for (a, b) in t_orig.values().iter().zip(t_back.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
