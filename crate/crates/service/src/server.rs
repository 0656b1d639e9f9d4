//! HTTP API consumed by the web front end.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /v1/ask` | `{"query": "...", "top_k": 4}` to an answer trace |
//! | `POST /v1/ingest` | `{"corpus_dir": "..."}` rebuilds and swaps the index |
//! | `GET /v1/stats` | index size, query count, source and status tallies |
//! | `GET /v1/health` | liveness |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use krishi::corpus::{ingest_corpus, ChunkingConfig};
use krishi::enrichment::load_rules;
use krishi::gateway::Backends;
use krishi::pipeline::{build_index, AnswerTrace, Pipeline, PromptTemplate, Status};
use krishi::VectorIndex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::config::ServiceConfig;

#[derive(Debug, Default)]
struct Tallies {
    sources: BTreeMap<String, usize>,
    statuses: BTreeMap<String, usize>,
}

/// Shared server state. The index is swapped whole, so a request always
/// sees exactly one index generation.
pub struct AppState {
    pipeline: Pipeline,
    index: RwLock<Arc<VectorIndex>>,
    chunking: ChunkingConfig,
    index_path: Option<PathBuf>,
    ingest_enabled: bool,
    ingest_lock: tokio::sync::Mutex<()>,
    queries_served: AtomicU64,
    tallies: Mutex<Tallies>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub index_size: usize,
    pub dim: usize,
    pub queries_served: u64,
    pub source_distribution: BTreeMap<String, usize>,
    pub status_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Deserialize)]
struct AskRequest {
    query: String,
    #[serde(default)]
    top_k: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct IngestRequest {
    corpus_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestResponse {
    pub docs: usize,
    pub chunks: usize,
}

impl AppState {
    /// `index_path`, when set, receives every index built by `/v1/ingest`.
    pub fn new(pipeline: Pipeline, index: VectorIndex, index_path: Option<PathBuf>) -> anyhow::Result<Self> {
        let chunking = pipeline.config().chunking()?;
        anyhow::ensure!(
            index.dim() == pipeline.config().dim,
            "index dim {} differs from configured dim {}",
            index.dim(),
            pipeline.config().dim
        );
        Ok(Self {
            pipeline,
            index: RwLock::new(Arc::new(index)),
            chunking,
            index_path,
            ingest_enabled: true,
            ingest_lock: tokio::sync::Mutex::new(()),
            queries_served: AtomicU64::new(0),
            tallies: Mutex::new(Tallies::default()),
        })
    }

    pub fn with_ingest(mut self, enabled: bool) -> Self {
        self.ingest_enabled = enabled;
        self
    }

    /// Builds the pipeline from a config and loads the persisted index.
    pub fn from_config(cfg: &ServiceConfig) -> anyhow::Result<Self> {
        let pipeline = pipeline_from_config(cfg)?;
        let index = VectorIndex::load(&cfg.index_path).with_context(|| {
            format!(
                "loading index {} (build one with `krishi ingest`)",
                cfg.index_path.display()
            )
        })?;
        Ok(Self::new(pipeline, index, Some(cfg.index_path.clone()))?.with_ingest(cfg.ingest_enabled))
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Current index generation.
    pub fn index(&self) -> Arc<VectorIndex> {
        self.index.read().expect("index lock poisoned").clone()
    }

    pub async fn ask(&self, query: &str, top_k: Option<usize>) -> AnswerTrace {
        let index = self.index();
        let trace = self.pipeline.answer(query, &index, top_k).await;
        self.record(&trace);
        trace
    }

    fn record(&self, trace: &AnswerTrace) {
        let mut t = self.tallies.lock().expect("stats lock poisoned");
        for hit in &trace.hits {
            *t.sources.entry(hit.meta.source_name.clone()).or_default() += 1;
        }
        *t.statuses.entry(trace.status.as_str().to_string()).or_default() += 1;
        self.queries_served.fetch_add(1, Ordering::Relaxed);
    }

    pub fn stats(&self) -> StatsResponse {
        let index = self.index();
        let t = self.tallies.lock().expect("stats lock poisoned");
        StatsResponse {
            index_size: index.len(),
            dim: index.dim(),
            queries_served: self.queries_served.load(Ordering::Relaxed),
            source_distribution: t.sources.clone(),
            status_counts: t.statuses.clone(),
        }
    }

    /// Builds a fresh index from `dir`, persists it, then swaps it in.
    /// Concurrent ingests are serialized.
    pub async fn ingest(&self, dir: &Path) -> anyhow::Result<IngestResponse> {
        let _guard = self.ingest_lock.lock().await;
        let corpus = ingest_corpus(dir, self.chunking)?;
        let index = build_index(&corpus.chunks, self.pipeline.backends().embedder.as_ref()).await?;
        if let Some(path) = &self.index_path {
            index.save(path)?;
        }
        let resp = IngestResponse {
            docs: corpus.documents,
            chunks: index.len(),
        };
        *self.index.write().expect("index lock poisoned") = Arc::new(index);
        tracing::info!(dir = %dir.display(), docs = resp.docs, chunks = resp.chunks, "index swapped");
        Ok(resp)
    }
}

pub fn pipeline_from_config(cfg: &ServiceConfig) -> anyhow::Result<Pipeline> {
    let rulebook = load_rules(&cfg.rulebook_path)?;
    let template = PromptTemplate::load(&cfg.prompt_template_path)?;
    let backends = Backends::from_config(&cfg.backend()?, cfg.pipeline.dim)?;
    Ok(Pipeline::new(cfg.pipeline.clone(), Arc::new(rulebook), template, backends)?)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: AskRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    if req.query.trim().is_empty() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "query must not be empty");
    }
    if req.top_k == Some(0) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "top_k must be >= 1");
    }
    let trace = state.ask(&req.query, req.top_k).await;
    let code = if trace.status == Status::BackendError {
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::OK
    };
    (code, Json(trace)).into_response()
}

async fn ingest(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    if !state.ingest_enabled {
        return error(StatusCode::FORBIDDEN, "ingest is disabled");
    }
    let req: IngestRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    if !req.corpus_dir.is_dir() {
        return (
            StatusCode::NOT_FOUND,
            Json(json!({
                "error": "corpus directory not found",
                "path": req.corpus_dir.display().to_string(),
            })),
        )
            .into_response();
    }
    match state.ingest(&req.corpus_dir).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => {
            tracing::warn!(error = %e, "ingest failed");
            error(StatusCode::UNPROCESSABLE_ENTITY, format!("{e:#}"))
        }
    }
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<StatsResponse> {
    Json(state.stats())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Routes plus a CORS layer restricted to `cors_origins`.
pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> anyhow::Result<Router> {
    let origins = cors_origins
        .iter()
        .map(|o| HeaderValue::from_str(o).with_context(|| format!("invalid CORS origin {o:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cors = CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Ok(Router::new()
        .route("/v1/ask", post(ask))
        .route("/v1/ingest", post(ingest))
        .route("/v1/stats", get(stats))
        .route("/v1/health", get(health))
        .layer(cors)
        .with_state(state))
}

/// Binds `cfg.listen` and serves until the process is stopped.
pub async fn serve(cfg: &ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(cfg)?);
    let app = router(state, &cfg.cors_origins)?;
    let listener = tokio::net::TcpListener::bind(cfg.listen_addr())
        .await
        .with_context(|| format!("binding {}", cfg.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).await?;
    Ok(())
}
