//! Truncation-robust embedding workbench: contrastive two-tower training with
//! nested (Matryoshka) objectives, a PCA compression baseline, BM25 + dense
//! hybrid retrieval, and graded-relevance log-replay evaluation.
//!
//! The crate is organized around a small set of self-contained modules:
//!
//! - [`embedding`]: vector value types, truncation and similarity primitives,
//!   and the binary embedding store format.
//! - [`encoder`]: a deterministic hashed character n-gram text encoder with
//!   role-prefix conditioning (query vs. passage).
//! - [`training`]: in-batch-negatives contrastive loss wrapped in nested
//!   truncation objectives, exact analytic gradients, and a seeded Adam loop.
//! - [`pca`]: principal-component compression used as the baseline arm.
//! - [`retrieval`]: lexical BM25 index, exact flat dense index, threshold-gated
//!   hybrid blending, and ranking feature extraction.
//! - [`eval`]: nDCG/Precision/Recall log replay, correlation statistics, and
//!   model-vs-model comparison reports.
//! - [`datagen`]: seeded synthetic marketplace corpus and session logs.
//!
//! All randomness in the crate flows through [`rng`], a fixed, documented
//! generator, so every artifact is bit-reproducible from its seed.

pub mod datagen;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod hash;
pub mod pca;
pub mod retrieval;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
