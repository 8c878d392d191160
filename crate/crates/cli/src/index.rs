//! On-disk index bundle.
//!
//! A directory holding everything one retrieval arm needs:
//!
//! - `lexical.bin`   BM25 postings over the item titles
//! - `dense.memb`    transformed item embeddings, unit rows
//! - `items.jsonl`   item table in ordinal order
//! - `encoder.menc`  the encoder that embeds queries for this arm
//! - `transform.json` how raw encoder output maps into index space
//! - `pca.mpca`      present when the transform is a PCA projection
//!
//! Queries are encoded and transformed with exactly the same path items
//! took at build time, so stored and query vectors always live in the same
//! space.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use mercat_core::embedding::{Embedding, EmbeddingStore};
use mercat_core::encoder::{EncoderModel, Role};
use mercat_core::pca::PcaModel;
use mercat_core::retrieval::{DenseIndex, ItemDoc, LexicalIndex, DEFAULT_B, DEFAULT_K1};

use crate::fileio;

/// How encoder output is mapped into index space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// Full-dimension embeddings as produced by the encoder.
    None,
    /// Leading-prefix truncation, renormalized.
    Truncate { dim: usize },
    /// PCA projection (components stored alongside), renormalized.
    Pca { file: String },
}

enum LoadedTransform {
    None,
    Truncate(usize),
    Pca(PcaModel),
}

pub struct IndexBundle {
    pub lexical: LexicalIndex,
    pub dense: DenseIndex,
    pub model: EncoderModel,
    pub items: Vec<ItemDoc>,
    transform: LoadedTransform,
    ordinals: HashMap<String, usize>,
}

fn apply_transform(transform: &LoadedTransform, emb: &Embedding) -> Result<Embedding> {
    Ok(match transform {
        LoadedTransform::None => emb.clone(),
        LoadedTransform::Truncate(dim) => emb.truncate(*dim, true)?,
        LoadedTransform::Pca(model) => model.transform(emb, true)?,
    })
}

/// Encode, transform, and persist the full bundle.
pub fn build_index(
    items: &[ItemDoc],
    model: &EncoderModel,
    transform: &TransformSpec,
    pca: Option<&PcaModel>,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let loaded = match transform {
        TransformSpec::None => LoadedTransform::None,
        TransformSpec::Truncate { dim } => {
            anyhow::ensure!(
                *dim >= 1 && *dim <= model.full_dim(),
                "truncate dim {dim} outside [1, {}]",
                model.full_dim()
            );
            LoadedTransform::Truncate(*dim)
        }
        TransformSpec::Pca { .. } => {
            let pca = pca.context("pca transform requested without a PCA model")?;
            anyhow::ensure!(
                pca.input_dim() == model.full_dim(),
                "pca input dim {} != encoder dim {}",
                pca.input_dim(),
                model.full_dim()
            );
            LoadedTransform::Pca(pca.clone())
        }
    };

    let embeddings: Vec<Embedding> = items
        .par_iter()
        .map(|item| {
            let raw = model.encode(&item.title, Role::Passage);
            apply_transform(&loaded, &raw).map_err(anyhow::Error::from)
        })
        .collect::<Result<_>>()?;

    let dim = match &loaded {
        LoadedTransform::None => model.full_dim(),
        LoadedTransform::Truncate(d) => *d,
        LoadedTransform::Pca(p) => p.target_dim(),
    };
    let mut store = EmbeddingStore::new(dim)?;
    for (item, emb) in items.iter().zip(&embeddings) {
        store.push(&item.item_id, emb)?;
    }
    store.write(&out_dir.join("dense.memb"))?;

    let docs: Vec<(String, String)> = items
        .iter()
        .map(|i| (i.item_id.clone(), i.title.clone()))
        .collect();
    let lexical = LexicalIndex::build(&docs, DEFAULT_K1, DEFAULT_B)?;
    lexical.write(&out_dir.join("lexical.bin"))?;

    fileio::write_jsonl(&out_dir.join("items.jsonl"), items)?;
    model.write(&out_dir.join("encoder.menc"))?;
    if let LoadedTransform::Pca(pca) = &loaded {
        pca.write(&out_dir.join("pca.mpca"))?;
    }
    fileio::write_json_pretty(&out_dir.join("transform.json"), transform)?;
    Ok(())
}

pub fn load_index(dir: &Path) -> Result<IndexBundle> {
    let transform_spec: TransformSpec = fileio::read_json(&dir.join("transform.json"))?;
    let model = EncoderModel::read(&dir.join("encoder.menc"))?;
    let transform = match &transform_spec {
        TransformSpec::None => LoadedTransform::None,
        TransformSpec::Truncate { dim } => LoadedTransform::Truncate(*dim),
        TransformSpec::Pca { file } => LoadedTransform::Pca(PcaModel::read(&dir.join(file))?),
    };
    let store = EmbeddingStore::read(&dir.join("dense.memb"))?;
    let ordinals: HashMap<String, usize> = store
        .ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let dense = DenseIndex::from_store(store)?;
    let lexical = LexicalIndex::read(&dir.join("lexical.bin"))?;
    let items = fileio::read_items(&dir.join("items.jsonl"))?;
    Ok(IndexBundle {
        lexical,
        dense,
        model,
        items,
        transform,
        ordinals,
    })
}

impl IndexBundle {
    /// Encode one query into index space.
    pub fn query_embedding(&self, text: &str) -> Result<Embedding> {
        let raw = self.model.encode(text, Role::Query);
        apply_transform(&self.transform, &raw)
    }

    /// Batch-encode queries; order preserved.
    pub fn query_embeddings(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts
            .par_iter()
            .map(|t| self.query_embedding(t))
            .collect()
    }

    pub fn item_ordinal(&self, item_id: &str) -> Option<usize> {
        self.ordinals.get(item_id).copied()
    }

    /// Cosine between an index-space query embedding and a stored item.
    /// Stored rows are unit (or zero), so this is a clamped dot product.
    pub fn stored_cosine(&self, query: &Embedding, ordinal: usize) -> f64 {
        let row = self.dense.store().row(ordinal);
        let mut dot = 0.0f64;
        for (q, &v) in query.values().iter().zip(row) {
            dot += q * f64::from(v);
        }
        dot.clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mercat_core::encoder::EncoderConfig;

    fn items() -> Vec<ItemDoc> {
        vec![
            ItemDoc::new("item_a", "nintendo switch console").unwrap(),
            ItemDoc::new("item_b", "switch carrying case").unwrap(),
            ItemDoc::new("item_c", "leather handbag").unwrap(),
        ]
    }

    fn model(seed: u64) -> EncoderModel {
        EncoderModel::random_init(EncoderConfig {
            hash_space: 1 << 12,
            full_dim: 16,
            seed,
            ..EncoderConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn build_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let model = model(3);
        build_index(&items(), &model, &TransformSpec::None, None, dir.path()).unwrap();
        let bundle = load_index(dir.path()).unwrap();
        assert_eq!(bundle.dense.len(), 3);
        assert_eq!(bundle.lexical.len(), 3);
        assert_eq!(bundle.items.len(), 3);

        // Query embedding matches direct encoding at full dim.
        let q = bundle.query_embedding("switch").unwrap();
        let direct = model.encode("switch", Role::Query);
        assert_eq!(q, direct);

        // Stored cosine equals embedding cosine within f32 storage noise
        // (rows are f32, so their norm drifts ~1e-7 from 1.0).
        let ord = bundle.item_ordinal("item_a").unwrap();
        let via_row = bundle.stored_cosine(&q, ord);
        let via_emb = q.cosine(&bundle.dense.store().embedding(ord)).unwrap();
        assert!((via_row - via_emb).abs() < 1e-6);
    }

    #[test]
    fn truncated_bundle_searches_in_truncated_space() {
        let dir = tempfile::tempdir().unwrap();
        build_index(
            &items(),
            &model(4),
            &TransformSpec::Truncate { dim: 4 },
            None,
            dir.path(),
        )
        .unwrap();
        let bundle = load_index(dir.path()).unwrap();
        assert_eq!(bundle.dense.dim(), 4);
        let q = bundle.query_embedding("switch console").unwrap();
        assert_eq!(q.dim(), 4);
        assert!((q.norm() - 1.0).abs() < 1e-9);
        let hits = bundle.dense.search(&q, 3).unwrap();
        assert_eq!(hits.len(), 3);
    }

    #[test]
    fn pca_bundle_round_trips() {
        use mercat_core::pca::pca_fit;
        let dir = tempfile::tempdir().unwrap();
        let model = model(5);
        let corpus: Vec<Embedding> = (0..30)
            .map(|i| model.encode(&format!("filler item number {i}"), Role::Passage))
            .collect();
        let pca = pca_fit(&corpus, 2).unwrap();
        build_index(
            &items(),
            &model,
            &TransformSpec::Pca {
                file: "pca.mpca".to_string(),
            },
            Some(&pca),
            dir.path(),
        )
        .unwrap();
        let bundle = load_index(dir.path()).unwrap();
        assert_eq!(bundle.dense.dim(), 2);
        let q = bundle.query_embedding("handbag").unwrap();
        assert_eq!(q.dim(), 2);
    }

    #[test]
    fn truncate_dim_out_of_range_fails() {
        let dir = tempfile::tempdir().unwrap();
        let err = build_index(
            &items(),
            &model(6),
            &TransformSpec::Truncate { dim: 99 },
            None,
            dir.path(),
        );
        assert!(err.is_err());
    }
}
