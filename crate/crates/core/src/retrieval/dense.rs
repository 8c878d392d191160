//! Exact flat dense index.
//!
//! A contiguous f32 store of unit-norm rows scanned with f64 accumulation.
//! No approximation anywhere: top-k equals the exhaustive argsort, with ties
//! broken by ascending item id.

use std::cmp::Ordering;

use crate::embedding::{Embedding, EmbeddingStore};
use crate::error::{Error, Result};

/// How far a stored row's norm may drift from 1.0 (f32 storage rounding).
const ROW_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct DenseIndex {
    store: EmbeddingStore,
}

impl DenseIndex {
    /// Wrap a store, validating that every row is unit norm (within 1e-4)
    /// or exactly zero.
    pub fn from_store(store: EmbeddingStore) -> Result<Self> {
        for i in 0..store.len() {
            let norm: f64 = store
                .row(i)
                .iter()
                .map(|&v| {
                    let v = f64::from(v);
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            if norm != 0.0 && (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
                return Err(Error::Config(format!(
                    "row {} ({}) has norm {norm}, expected 1.0 or exactly 0",
                    i,
                    store.id(i)
                )));
            }
        }
        Ok(DenseIndex { store })
    }

    pub fn dim(&self) -> usize {
        self.store.dim()
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    /// Exact top-k by cosine. The query is normalized once on entry so the
    /// scan reduces to dot products against the unit-norm rows.
    pub fn search(&self, query: &Embedding, k: usize) -> Result<Vec<(String, f64)>> {
        if query.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "query dim {} but index dim {}",
                query.dim(),
                self.dim()
            )));
        }
        if k == 0 || self.is_empty() {
            return Ok(Vec::new());
        }
        let q = query.l2_normalized();
        let qv = q.values();

        let mut scored: Vec<(u32, f64)> = (0..self.len())
            .map(|i| {
                let row = self.store.row(i);
                let mut dot = 0.0f64;
                for (a, &b) in qv.iter().zip(row) {
                    dot += a * f64::from(b);
                }
                (i as u32, dot)
            })
            .collect();

        let better = |a: &(u32, f64), b: &(u32, f64)| -> Ordering {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.store.id(a.0 as usize).cmp(self.store.id(b.0 as usize)))
        };
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, better);
            scored.truncate(k);
        }
        scored.sort_unstable_by(better);
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.store.id(i as usize).to_string(), s))
            .collect())
    }
}
