//! Deterministic trainable text encoder with role-prefix conditioning.
//!
//! Text is prefixed by its role marker, lowercased, decomposed into character
//! n-grams, and hashed into a fixed bucket space with FNV-1a 64. A single
//! shared projection matrix maps the L2-scaled bucket counts to the output
//! dimension; query/item asymmetry comes entirely from the prefixes. The
//! encoder is pure and bit-reproducible across runs and platforms.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::rng::Rng;

/// Input role: determines which prefix conditions the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Passage,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    /// Number of feature buckets the n-gram hash is reduced into.
    pub hash_space: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Full output dimension d_1.
    pub full_dim: usize,
    pub query_prefix: String,
    pub passage_prefix: String,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hash_space: 1 << 18,
            ngram_min: 2,
            ngram_max: 4,
            full_dim: 64,
            query_prefix: "query: ".to_string(),
            passage_prefix: "passage: ".to_string(),
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::Config(format!(
                "ngram bounds [{}, {}] invalid",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.full_dim == 0 {
            return Err(Error::Config("full_dim must be >= 1".into()));
        }
        if self.hash_space < self.full_dim {
            return Err(Error::Config(format!(
                "hash_space {} < full_dim {}",
                self.hash_space, self.full_dim
            )));
        }
        Ok(())
    }

    pub fn prefix(&self, role: Role) -> &str {
        match role {
            Role::Query => &self.query_prefix,
            Role::Passage => &self.passage_prefix,
        }
    }
}

/// Sparse bucket->count vector, entries sorted by bucket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseFeatures {
    entries: Vec<(u32, u32)>,
}

impl SparseFeatures {
    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// L2 norm of the count vector.
    pub fn l2(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, c)| {
                let c = f64::from(c);
                c * c
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Prefix, lowercase, extract character n-grams, hash into buckets.
///
/// Spaces count as characters, so word boundaries contribute features. The
/// result is a sorted bucket->count list, identical across runs and
/// platforms.
pub fn featurize(text: &str, role: Role, config: &EncoderConfig) -> SparseFeatures {
    let prefixed = format!("{}{}", config.prefix(role), text);
    let lowered = prefixed.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();

    let mut counts: HashMap<u32, u32> = HashMap::new();
    let mut buf = String::new();
    for n in config.ngram_min..=config.ngram_max {
        if chars.len() < n {
            break;
        }
        for window in chars.windows(n) {
            buf.clear();
            buf.extend(window.iter());
            let bucket = (fnv1a64(buf.as_bytes()) % config.hash_space as u64) as u32;
            *counts.entry(bucket).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(u32, u32)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|&(b, _)| b);
    SparseFeatures { entries }
}

const MENC_MAGIC: &[u8; 4] = b"MENC";
const MENC_VERSION: u8 = 1;

/// Shared-projection encoder parameters.
///
/// The weight matrix has logical shape full_dim x hash_space. It is stored
/// bucket-major in memory (each bucket's column is contiguous) because
/// encoding and training touch a handful of buckets across all output dims;
/// the on-disk layout is row-major.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    config: EncoderConfig,
    version: u8,
    w: Vec<f32>,
}

impl EncoderModel {
    /// Random initialization: i.i.d. uniform(-1/sqrt(hash_space),
    /// +1/sqrt(hash_space)) drawn bucket-major from the seeded generator.
    pub fn random_init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::seed_from(config.seed);
        let bound = 1.0 / (config.hash_space as f64).sqrt();
        let w = (0..config.hash_space * config.full_dim)
            .map(|_| rng.uniform(-bound, bound) as f32)
            .collect();
        Ok(EncoderModel {
            config,
            version: MENC_VERSION,
            w,
        })
    }

    /// Build from explicit bucket-major weights.
    pub fn from_weights(config: EncoderConfig, w: Vec<f32>) -> Result<Self> {
        config.validate()?;
        if w.len() != config.hash_space * config.full_dim {
            return Err(Error::Shape(format!(
                "weight length {} != hash_space {} * full_dim {}",
                w.len(),
                config.hash_space,
                config.full_dim
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("weights contain non-finite values".into()));
        }
        Ok(EncoderModel {
            config,
            version: MENC_VERSION,
            w,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn full_dim(&self) -> usize {
        self.config.full_dim
    }

    /// Contiguous weights for one bucket (all output dims).
    #[inline]
    pub fn bucket_column(&self, bucket: u32) -> &[f32] {
        let d = self.config.full_dim;
        let start = bucket as usize * d;
        &self.w[start..start + d]
    }

    /// Raw bucket-major weights.
    pub fn weights(&self) -> &[f32] {
        &self.w
    }

    /// Encode one text: project the L2-scaled sparse counts and normalize.
    ///
    /// Returns the zero vector when the projection itself is ~0 (e.g. an
    /// all-zero weight matrix).
    pub fn encode(&self, text: &str, role: Role) -> Embedding {
        let features = featurize(text, role, &self.config);
        self.encode_features(&features)
    }

    /// Encode pre-featurized input.
    pub fn encode_features(&self, features: &SparseFeatures) -> Embedding {
        let d = self.config.full_dim;
        let mut y = vec![0.0f64; d];
        let scale = features.l2();
        if scale > 0.0 {
            for &(bucket, count) in features.entries() {
                let x = f64::from(count) / scale;
                let col = self.bucket_column(bucket);
                for (acc, &w) in y.iter_mut().zip(col) {
                    *acc += f64::from(w) * x;
                }
            }
        }
        Embedding::new(y)
            .expect("projection of finite weights is finite")
            .l2_normalized()
    }

    /// Encode a batch; elementwise equal to per-item `encode`, order
    /// preserved regardless of worker count.
    pub fn encode_batch(&self, texts: &[(String, Role)]) -> Vec<Embedding> {
        texts
            .par_iter()
            .map(|(text, role)| self.encode(text, *role))
            .collect()
    }

    /// Write as MENC: magic, version, canonical-JSON config (length-prefixed,
    /// keys sorted), then weights as little-endian f32 in row-major order
    /// (logical shape full_dim x hash_space).
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(path, e);
        w.write_all(MENC_MAGIC).map_err(io_err)?;
        w.write_all(&[self.version]).map_err(io_err)?;
        // serde_json maps are ordered, so Value round-trip sorts keys.
        let cfg_json = serde_json::to_string(&serde_json::to_value(&self.config)?)?;
        w.write_all(&(cfg_json.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(cfg_json.as_bytes()).map_err(io_err)?;
        let (d, h) = (self.config.full_dim, self.config.hash_space);
        for row in 0..d {
            for bucket in 0..h {
                let v = self.w[bucket * d + row];
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let io_err = |e| Error::io(path, e);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MENC_MAGIC {
            return Err(Error::format(path, "bad magic, expected MENC"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(io_err)?;
        if version[0] != MENC_VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version[0])));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4).map_err(io_err)?;
        let cfg_len = u32::from_le_bytes(buf4) as usize;
        let mut cfg_bytes = vec![0u8; cfg_len];
        r.read_exact(&mut cfg_bytes).map_err(io_err)?;
        let config: EncoderConfig = serde_json::from_slice(&cfg_bytes)?;
        config.validate().map_err(|e| Error::format(path, e.to_string()))?;

        let (d, h) = (config.full_dim, config.hash_space);
        let mut w = vec![0f32; d * h];
        for row in 0..d {
            for bucket in 0..h {
                r.read_exact(&mut buf4).map_err(io_err)?;
                w[bucket * d + row] = f32::from_le_bytes(buf4);
            }
        }
        Ok(EncoderModel {
            config,
            version: version[0],
            w,
        })
    }
}
