//! Thin HTTP inference/search service.
//!
//! Emulates the production flow with local components: per-bucket model
//! routing (buckets differ only in which encoder embeds text; every other
//! code path is shared), synchronous write-time item embedding into a
//! persistent feature store, and a query-time encode -> retrieve -> feature
//! pipeline over hybrid lexical+dense indexes.
//!
//! Concurrency: reads take an atomic snapshot of the built indexes; upserts
//! serialize through a single writer and swap whole index instances, so a
//! search never observes partial state and an acknowledged upsert is visible
//! to the next search.

pub mod routing;
pub mod service;
pub mod store;

pub use routing::RoutingConfig;
pub use service::{start, ServerHandle};
pub use store::{FeatureStore, FeatureStoreEntry};
