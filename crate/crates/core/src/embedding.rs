//! Vector value types and the truncation/similarity primitives every other
//! module consumes.
//!
//! Embeddings are immutable once constructed and safe to share across
//! threads. Values are held as f64 in memory; the on-disk store format
//! ([`EmbeddingStore`]) uses 32-bit floats, and all dot products accumulate
//! in 64-bit regardless of storage width.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Norms at or below this threshold are treated as zero; normalization is
/// skipped rather than dividing by a denormal.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// A fixed-dimension real vector with nested-prefix semantics: the leading
/// `d` coordinates of an embedding are themselves a usable embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Construct from raw values. Rejects NaN/Inf and empty vectors.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("embedding must have dim >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("embedding contains non-finite values".into()));
        }
        Ok(Embedding { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// L2 norm, accumulated in f64.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// First `d` coordinates; optionally renormalized to unit length.
    ///
    /// A prefix with norm <= 1e-12 is returned as the zero vector unchanged,
    /// never divided.
    pub fn truncate(&self, d: usize, renormalize: bool) -> Result<Embedding> {
        if d == 0 || d > self.dim() {
            return Err(Error::Range(format!(
                "truncation dim {d} outside [1, {}]",
                self.dim()
            )));
        }
        let mut values = self.values[..d].to_vec();
        if renormalize {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > ZERO_NORM_EPS {
                for v in &mut values {
                    *v /= norm;
                }
            }
        }
        Ok(Embedding { values })
    }

    /// Unit-norm copy, or the zero vector unchanged when the norm is ~0.
    pub fn l2_normalized(&self) -> Embedding {
        let norm = self.norm();
        if norm <= ZERO_NORM_EPS {
            return self.clone();
        }
        Embedding {
            values: self.values.iter().map(|v| v / norm).collect(),
        }
    }

    /// Cosine similarity, clamped to [-1, 1] to absorb rounding.
    ///
    /// When both norms are ~0 the similarity is defined as 0.0.
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "cosine dims {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut dot = 0.0f64;
        let mut na = 0.0f64;
        let mut nb = 0.0f64;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        let na = na.sqrt();
        let nb = nb.sqrt();
        if na <= ZERO_NORM_EPS && nb <= ZERO_NORM_EPS {
            return Ok(0.0);
        }
        if na <= ZERO_NORM_EPS || nb <= ZERO_NORM_EPS {
            return Ok(0.0);
        }
        Ok((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

/// Strictly decreasing truncation dims with per-level weights.
///
/// `dims[0]` must equal the encoder's full output dimension when used for
/// training. Weights may be zero when evaluating a loss level out of the
/// aggregate; the training configuration separately requires them positive.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NestedDims {
    dims: Vec<usize>,
    weights: Vec<f64>,
}

impl NestedDims {
    pub fn new(dims: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("nested dims must be non-empty".into()));
        }
        if dims.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} dims but {} weights",
                dims.len(),
                weights.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("nested dims must be >= 1".into()));
        }
        if dims.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!(
                "nested dims must be strictly decreasing, got {dims:?}"
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("nested weights must be finite and >= 0".into()));
        }
        Ok(NestedDims { dims, weights })
    }

    /// Uniform weight 1.0 at every level.
    pub fn uniform(dims: Vec<usize>) -> Result<Self> {
        let weights = vec![1.0; dims.len()];
        NestedDims::new(dims, weights)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn full_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn levels(&self) -> usize {
        self.dims.len()
    }

    /// True when every weight is strictly positive (required for training).
    pub fn all_weights_positive(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }
}

const MEMB_MAGIC: &[u8; 4] = b"MEMB";
const MEMB_VERSION: u8 = 1;

/// Contiguous f32 vector store with a parallel item-id table.
///
/// On-disk layout (all little-endian): magic `MEMB`, version u8, dim u32,
/// count u64, count*dim f32 values, then count ids each written as a u32
/// byte length followed by UTF-8 bytes. Round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("store dim must be >= 1".into()));
        }
        Ok(EmbeddingStore {
            dim,
            data: Vec::new(),
            ids: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push(&mut self, id: impl Into<String>, emb: &Embedding) -> Result<()> {
        if emb.dim() != self.dim {
            return Err(Error::Shape(format!(
                "store dim {} but embedding dim {}",
                self.dim,
                emb.dim()
            )));
        }
        self.ids.push(id.into());
        self.data.extend(emb.values().iter().map(|&v| v as f32));
        Ok(())
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Raw f32 row; dot products over it should accumulate in f64.
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row widened back to an f64 embedding.
    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding {
            values: self.row(i).iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Ordinal of an id, if present. Linear scan; callers needing repeated
    /// lookups should build their own map.
    pub fn find(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(MEMB_MAGIC).map_err(io_err)?;
        w.write_all(&[MEMB_VERSION]).map_err(io_err)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(self.len() as u64).to_le_bytes()).map_err(io_err)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        for id in &self.ids {
            let bytes = id.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
            w.write_all(bytes).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MEMB_MAGIC {
            return Err(Error::format(path, "bad magic, expected MEMB"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(io_err)?;
        if version[0] != MEMB_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version[0])));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(io_err)?;
        let dim = u32::from_le_bytes(buf4) as usize;
        if dim == 0 {
            return Err(Error::format(path, "dim 0"));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8).map_err(io_err)?;
        let count = u64::from_le_bytes(buf8) as usize;

        let mut data = vec![0f32; count * dim];
        for v in &mut data {
            r.read_exact(&mut buf4).map_err(io_err)?;
            *v = f32::from_le_bytes(buf4);
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut buf4).map_err(io_err)?;
            let len = u32::from_le_bytes(buf4) as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes).map_err(io_err)?;
            let id = String::from_utf8(bytes)
                .map_err(|_| Error::format(path, "id is not valid UTF-8"))?;
            ids.push(id);
        }
        Ok(EmbeddingStore { dim, data, ids })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(values: &[f64]) -> Embedding {
        Embedding::new(values.to_vec()).unwrap()
    }

    #[test]
    fn truncate_renormalizes_prefix() {
        let e = emb(&[0.6, 0.8]);
        let t = e.truncate(1, true).unwrap();
        assert_eq!(t.values(), &[1.0]);
    }

    #[test]
    fn truncate_identity_at_full_dim() {
        let e = emb(&[0.6, 0.8]);
        let t = e.truncate(2, true).unwrap();
        for (a, b) in t.values().iter().zip([0.6, 0.8]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncate_zero_prefix_guard() {
        let e = emb(&[0.0, 1.0]);
        let t = e.truncate(1, true).unwrap();
        assert_eq!(t.values(), &[0.0]);
    }

    #[test]
    fn truncate_out_of_range() {
        let e = emb(&[1.0, 2.0]);
        assert!(matches!(e.truncate(0, false), Err(Error::Range(_))));
        assert!(matches!(e.truncate(3, false), Err(Error::Range(_))));
    }

    #[test]
    fn cosine_orthogonal_and_self() {
        assert_eq!(emb(&[1.0, 0.0]).cosine(&emb(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(
            emb(&[1.0, 2.0, 2.0]).cosine(&emb(&[1.0, 2.0, 2.0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn cosine_hand_case() {
        let c = emb(&[1.0, 1.0]).cosine(&emb(&[1.0, 0.0])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((c - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_shape_error_and_zero_rule() {
        assert!(matches!(
            emb(&[1.0]).cosine(&emb(&[1.0, 2.0])),
            Err(Error::Shape(_))
        ));
        assert_eq!(emb(&[0.0, 0.0]).cosine(&emb(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn l2_normalize_cases() {
        assert_eq!(emb(&[3.0, 4.0]).l2_normalized().values(), &[0.6, 0.8]);
        assert_eq!(emb(&[0.0, 0.0]).l2_normalized().values(), &[0.0, 0.0]);
        assert_eq!(emb(&[5.0]).l2_normalized().values(), &[1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Embedding::new(vec![f64::NAN]).is_err());
        assert!(Embedding::new(vec![f64::INFINITY, 0.0]).is_err());
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn nested_prefix_property() {
        let mut rng = crate::rng::Rng::seed_from(11);
        for _ in 0..50 {
            let values: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let e = emb(&values);
            let long = e.truncate(12, false).unwrap();
            let short = e.truncate(5, false).unwrap();
            assert_eq!(&long.values()[..5], short.values());
        }
    }

    #[test]
    fn cosine_normalization_invariance() {
        let mut rng = crate::rng::Rng::seed_from(13);
        for _ in 0..100 {
            let a: Vec<f64> = (0..8).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let (a, b) = (emb(&a), emb(&b));
            if a.norm() <= ZERO_NORM_EPS || b.norm() <= ZERO_NORM_EPS {
                continue;
            }
            let direct = a.cosine(&b).unwrap();
            let normed = a.l2_normalized().cosine(&b.l2_normalized()).unwrap();
            assert!((direct - normed).abs() < 1e-9);
            // Symmetry is bitwise.
            assert_eq!(direct.to_bits(), b.cosine(&a).unwrap().to_bits());
        }
    }

    #[test]
    fn truncate_renormalize_idempotent() {
        let mut rng = crate::rng::Rng::seed_from(17);
        for _ in 0..50 {
            let values: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let e = emb(&values);
            let once = e.truncate(6, true).unwrap();
            let twice = once.truncate(6, true).unwrap();
            for (a, b) in once.values().iter().zip(twice.values()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn nested_dims_validation() {
        assert!(NestedDims::new(vec![64, 32, 16, 8], vec![1.0; 4]).is_ok());
        assert!(NestedDims::new(vec![32, 64], vec![1.0; 2]).is_err());
        assert!(NestedDims::new(vec![16, 16], vec![1.0; 2]).is_err());
        assert!(NestedDims::new(vec![16, 8], vec![1.0]).is_err());
        assert!(NestedDims::new(vec![16, 8], vec![1.0, -1.0]).is_err());
        // Zero weights are representable; training validates positivity.
        let zero_ok = NestedDims::new(vec![2, 1], vec![2.0, 0.0]).unwrap();
        assert!(!zero_ok.all_weights_positive());
    }

    #[test]
    fn memb_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.memb");
        let mut store = EmbeddingStore::new(3).unwrap();
        store
            .push("item_a", &emb(&[0.1, -0.7, 0.3]))
            .unwrap();
        store
            .push("item_b", &emb(&[1.0, 0.0, -1.0e-20]))
            .unwrap();
        store.push("id with spaces µ", &emb(&[0.5, 0.5, 0.5])).unwrap();
        store.write(&path).unwrap();
        let back = EmbeddingStore::read(&path).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.len(), 3);
        assert_eq!(back.ids(), store.ids());
        for i in 0..store.len() {
            let a: Vec<u32> = store.row(i).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.row(i).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn memb_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.memb");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            EmbeddingStore::read(&path),
            Err(Error::Format { .. })
        ));
    }
}
