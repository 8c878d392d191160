//! Axum service wiring: state, endpoints, startup.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use mercat_core::embedding::{Embedding, EmbeddingStore};
use mercat_core::encoder::{EncoderModel, Role};
use mercat_core::error::Error as CoreError;
use mercat_core::retrieval::{
    extract_ltr_features, hybrid_search, CandidateSource, DenseIndex, HybridConfig,
    HybridDiagnostics, LexicalIndex, RankedCandidate, DEFAULT_B, DEFAULT_K1,
};

use crate::routing::RoutingConfig;
use crate::store::{FeatureStore, FeatureStoreEntry};

/// Immutable index snapshot shared with readers; replaced wholesale on
/// every write.
struct BuiltIndexes {
    lexical: LexicalIndex,
    dense: BTreeMap<String, DenseIndex>,
    /// item_id -> ordinal, per bucket, for feature lookup.
    ordinals: BTreeMap<String, HashMap<String, usize>>,
}

struct ServingState {
    store: FeatureStore,
    indexes: Arc<BuiltIndexes>,
}

pub struct AppState {
    routing: RoutingConfig,
    models: BTreeMap<String, Arc<EncoderModel>>,
    state: RwLock<ServingState>,
}

#[derive(Debug, thiserror::Error)]
enum ApiError {
    #[error("{0}")]
    Validation(String),
    #[error("unknown bucket {0}")]
    UnknownBucket(String),
    #[error(transparent)]
    Internal(#[from] CoreError),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self {
            ApiError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::UnknownBucket(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = serde_json::json!({ "error": self.to_string() });
        (status, Json(body)).into_response()
    }
}

fn build_indexes(
    models: &BTreeMap<String, Arc<EncoderModel>>,
    store: &FeatureStore,
) -> Result<BuiltIndexes, CoreError> {
    let docs: Vec<(String, String)> = store
        .entries()
        .map(|e| (e.item_id.clone(), e.title.clone()))
        .collect();
    let lexical = LexicalIndex::build(&docs, DEFAULT_K1, DEFAULT_B)?;

    let mut dense = BTreeMap::new();
    let mut ordinals = BTreeMap::new();
    for (bucket, model) in models {
        let dim = model.full_dim();
        let mut emb_store = EmbeddingStore::new(dim)?;
        let mut by_id = HashMap::new();
        for entry in store.entries() {
            let Some(vector) = entry.embeddings.get(bucket) else {
                return Err(CoreError::Config(format!(
                    "item {} missing embedding for bucket {bucket}",
                    entry.item_id
                )));
            };
            let values: Vec<f64> = vector.iter().map(|&v| f64::from(v)).collect();
            by_id.insert(entry.item_id.clone(), emb_store.len());
            emb_store.push(&entry.item_id, &Embedding::new(values)?)?;
        }
        dense.insert(bucket.clone(), DenseIndex::from_store(emb_store)?);
        ordinals.insert(bucket.clone(), by_id);
    }
    Ok(BuiltIndexes {
        lexical,
        dense,
        ordinals,
    })
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl AppState {
    fn encode_under_all(&self, title: &str) -> BTreeMap<String, Vec<f32>> {
        self.models
            .iter()
            .map(|(bucket, model)| {
                let emb = model.encode(title, Role::Passage);
                let values: Vec<f32> = emb.values().iter().map(|&v| v as f32).collect();
                (bucket.clone(), values)
            })
            .collect()
    }

    /// Single-writer upsert: persist to the store, rebuild, swap.
    fn upsert(&self, item_id: &str, title: &str) -> Result<(), ApiError> {
        let embeddings = self.encode_under_all(title);
        let entry = FeatureStoreEntry {
            item_id: item_id.to_string(),
            title: title.to_string(),
            updated_at: now_unix(),
            embeddings,
        };
        let mut guard = self.state.write().expect("state lock poisoned");
        guard.store.put(entry).map_err(ApiError::Internal)?;
        let rebuilt = build_indexes(&self.models, &guard.store).map_err(ApiError::Internal)?;
        guard.indexes = Arc::new(rebuilt);
        Ok(())
    }

    fn snapshot(&self) -> Arc<BuiltIndexes> {
        self.state.read().expect("state lock poisoned").indexes.clone()
    }

    fn model_for(&self, user_id: &str) -> (String, Arc<EncoderModel>) {
        let bucket = self.routing.bucket_of(user_id).to_string();
        let model = self.models[&bucket].clone();
        (bucket, model)
    }
}

#[derive(serde::Deserialize)]
struct EncodeRequest {
    text: String,
    role: Role,
    #[serde(default)]
    user_id: String,
}

#[derive(serde::Serialize)]
struct EncodeResponse {
    bucket: String,
    dim: usize,
    embedding: Vec<f64>,
}

async fn encode_handler(
    State(app): State<Arc<AppState>>,
    Json(req): Json<EncodeRequest>,
) -> Result<Json<EncodeResponse>, ApiError> {
    let (bucket, model) = app.model_for(&req.user_id);
    let emb = model.encode(&req.text, req.role);
    Ok(Json(EncodeResponse {
        bucket,
        dim: emb.dim(),
        embedding: emb.values().to_vec(),
    }))
}

#[derive(serde::Deserialize)]
struct SearchRequest {
    query: String,
    #[serde(default)]
    user_id: String,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default = "default_hybrid")]
    hybrid: bool,
    #[serde(default = "default_tau")]
    tau: f64,
    /// Truncation budget for the raw-vector features; defaults to the
    /// bucket model's full dimension.
    #[serde(default)]
    feature_dim: Option<usize>,
}

fn default_k() -> usize {
    10
}
fn default_hybrid() -> bool {
    true
}
fn default_tau() -> f64 {
    0.90
}

#[derive(serde::Serialize)]
struct SearchCandidate {
    rank: usize,
    item_id: String,
    lexical_score: Option<f64>,
    dense_score: Option<f64>,
    source: CandidateSource,
    /// [cosine, query vector (budget dims), item vector (budget dims)].
    features: Vec<f64>,
}

#[derive(serde::Serialize)]
struct SearchResponse {
    bucket: String,
    candidates: Vec<SearchCandidate>,
    diagnostics: Option<HybridDiagnostics>,
}

async fn search_handler(
    State(app): State<Arc<AppState>>,
    Json(req): Json<SearchRequest>,
) -> Result<Json<SearchResponse>, ApiError> {
    if req.k == 0 {
        return Err(ApiError::Validation("k must be >= 1".into()));
    }
    let (bucket, model) = app.model_for(&req.user_id);
    let query_emb = model.encode(&req.query, Role::Query);
    let snapshot = app.snapshot();
    let dense = snapshot
        .dense
        .get(&bucket)
        .ok_or_else(|| ApiError::UnknownBucket(bucket.clone()))?;

    let (candidates, diagnostics) = if req.hybrid {
        let config = HybridConfig {
            tau: req.tau,
            lexical_k: req.k,
            dense_k: req.k,
            ..HybridConfig::default()
        };
        let (c, d) = hybrid_search(&snapshot.lexical, dense, &req.query, &query_emb, &config)
            .map_err(ApiError::Internal)?;
        (c, Some(d))
    } else {
        let hits = dense.search(&query_emb, req.k).map_err(ApiError::Internal)?;
        let c = hits
            .into_iter()
            .map(|(item_id, score)| RankedCandidate {
                item_id,
                lexical_score: None,
                dense_score: Some(score),
                source: CandidateSource::Dense,
            })
            .collect();
        (c, None)
    };

    // Ranking features against the stored item vectors of this bucket.
    let budget = req.feature_dim.unwrap_or_else(|| model.full_dim());
    let ordinals = &snapshot.ordinals[&bucket];
    let item_embs: Vec<Embedding> = candidates
        .iter()
        .map(|c| {
            let &ord = ordinals
                .get(&c.item_id)
                .expect("candidate came from this index");
            dense.store().embedding(ord)
        })
        .collect();
    let features = extract_ltr_features(&query_emb, &item_embs, budget).map_err(ApiError::Internal)?;

    let candidates = candidates
        .into_iter()
        .zip(features)
        .enumerate()
        .map(|(i, (c, features))| SearchCandidate {
            rank: i + 1,
            item_id: c.item_id,
            lexical_score: c.lexical_score,
            dense_score: c.dense_score,
            source: c.source,
            features,
        })
        .collect();

    Ok(Json(SearchResponse {
        bucket,
        candidates,
        diagnostics,
    }))
}

#[derive(serde::Deserialize)]
struct UpsertRequest {
    item_id: String,
    title: String,
}

#[derive(serde::Serialize)]
struct UpsertResponse {
    status: String,
    item_id: String,
}

async fn upsert_handler(
    State(app): State<Arc<AppState>>,
    Json(req): Json<UpsertRequest>,
) -> Result<Json<UpsertResponse>, ApiError> {
    if req.item_id.trim().is_empty() {
        return Err(ApiError::Validation("item_id must be non-empty".into()));
    }
    if req.title.trim().is_empty() {
        return Err(ApiError::Validation("title must be non-empty".into()));
    }
    app.upsert(&req.item_id, &req.title)?;
    Ok(Json(UpsertResponse {
        status: "ok".into(),
        item_id: req.item_id,
    }))
}

async fn healthz_handler() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn config_handler(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let buckets: BTreeMap<&String, serde_json::Value> = app
        .models
        .iter()
        .map(|(bucket, model)| {
            (
                bucket,
                serde_json::json!({
                    "model_path": app.routing.buckets[bucket],
                    "dim": model.full_dim(),
                }),
            )
        })
        .collect();
    let item_count = app
        .state
        .read()
        .expect("state lock poisoned")
        .store
        .len();
    Json(serde_json::json!({
        "buckets": buckets,
        "default_bucket": app.routing.default_bucket,
        "item_count": item_count,
    }))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/encode", post(encode_handler))
        .route("/search", post(search_handler))
        .route("/items", post(upsert_handler))
        .route("/healthz", get(healthz_handler))
        .route("/config", get(config_handler))
        .with_state(app)
}

/// Handle to a running service; dropping it does not stop the server, call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown_tx: oneshot::Sender<()>,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    pub async fn shutdown(self) {
        let _ = self.shutdown_tx.send(());
        let _ = self.task.await;
    }
}

/// Load models and the feature store, embed any startup corpus, build the
/// indexes, and serve. Startup failures name the failing component.
pub async fn start(routing: RoutingConfig, addr: SocketAddr) -> Result<ServerHandle, CoreError> {
    routing.validate()?;

    // Models, deduplicated by path.
    let mut by_path: HashMap<PathBuf, Arc<EncoderModel>> = HashMap::new();
    let mut models = BTreeMap::new();
    for (bucket, path) in &routing.buckets {
        let model = match by_path.get(path) {
            Some(m) => m.clone(),
            None => {
                let loaded = EncoderModel::read(path).map_err(|e| {
                    CoreError::Config(format!("bucket {bucket}: cannot load model: {e}"))
                })?;
                let arc = Arc::new(loaded);
                by_path.insert(path.clone(), arc.clone());
                arc
            }
        };
        models.insert(bucket.clone(), model);
    }

    let mut store = FeatureStore::open(&routing.store_path)
        .map_err(|e| CoreError::Config(format!("feature store: {e}")))?;

    // One-time batch pass over the startup corpus for items not yet stored.
    if let Some(items_path) = &routing.items_path {
        let content = std::fs::read_to_string(items_path)
            .map_err(|e| CoreError::Config(format!("items corpus: {e}")))?;
        for line in content.lines().filter(|l| !l.trim().is_empty()) {
            let doc: mercat_core::retrieval::ItemDoc = serde_json::from_str(line)?;
            if store.get(&doc.item_id).is_some() {
                continue;
            }
            let embeddings = models
                .iter()
                .map(|(bucket, model)| {
                    let emb = model.encode(&doc.title, Role::Passage);
                    let values: Vec<f32> = emb.values().iter().map(|&v| v as f32).collect();
                    (bucket.clone(), values)
                })
                .collect();
            store.put(FeatureStoreEntry {
                item_id: doc.item_id,
                title: doc.title,
                updated_at: now_unix(),
                embeddings,
            })?;
        }
        store.compact()?;
    }

    let indexes = build_indexes(&models, &store)
        .map_err(|e| CoreError::Config(format!("index build: {e}")))?;

    let app = Arc::new(AppState {
        routing,
        models,
        state: RwLock::new(ServingState {
            store,
            indexes: Arc::new(indexes),
        }),
    });

    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| CoreError::Config(format!("bind {addr}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| CoreError::Config(format!("local_addr: {e}")))?;
    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let task = tokio::spawn(async move {
        let server = axum::serve(listener, router(app)).with_graceful_shutdown(async {
            let _ = shutdown_rx.await;
        });
        if let Err(e) = server.await {
            eprintln!("server error: {e}");
        }
    });

    Ok(ServerHandle {
        addr,
        shutdown_tx,
        task,
    })
}
