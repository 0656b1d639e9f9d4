#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use krishi::corpus::ingest_corpus;
use krishi::enrichment::Rulebook;
use krishi::gateway::mock::DEFAULT_MOCK_SEED;
use krishi::gateway::Backends;
use krishi::pipeline::{build_index, Pipeline, PipelineConfig, PromptTemplate};
use krishi::VectorIndex;
use krishi_service::{router, AppState};

pub fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

pub fn corpus_dir() -> PathBuf {
    core_dir().join("fixtures/corpus")
}

pub fn cases_path() -> PathBuf {
    core_dir().join("fixtures/eval_cases.jsonl")
}

pub fn pipeline(rulebook: Rulebook, backends: Backends) -> Pipeline {
    Pipeline::new(PipelineConfig::default(), Arc::new(rulebook), PromptTemplate::default(), backends).unwrap()
}

pub fn mock_pipeline() -> Pipeline {
    pipeline(Rulebook::bundled(), Backends::mock(PipelineConfig::default().dim, DEFAULT_MOCK_SEED).unwrap())
}

pub async fn index_for(dir: &Path, pipeline: &Pipeline) -> VectorIndex {
    let corpus = ingest_corpus(dir, pipeline.config().chunking().unwrap()).unwrap();
    build_index(&corpus.chunks, pipeline.backends().embedder.as_ref()).await.unwrap()
}

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    pub http: reqwest::Client,
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }
}

pub async fn spawn_with(state: AppState, cors: &[String]) -> Server {
    let state = Arc::new(state);
    let app = router(state.clone(), cors).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base,
        state,
        http: reqwest::Client::new(),
    }
}

/// Fixture-backed server; ingests persist to `index_path` when given.
pub async fn spawn_fixture(index_path: Option<PathBuf>) -> Server {
    let p = mock_pipeline();
    let index = index_for(&corpus_dir(), &p).await;
    spawn_with(AppState::new(p, index, index_path).unwrap(), &[]).await
}

/// Copies the fixture corpus into `dest`, prefixing every file name so the
/// resulting doc ids differ from the originals.
pub fn copy_corpus_with_prefix(dest: &Path, prefix: &str) {
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy();
        std::fs::copy(&path, dest.join(format!("{prefix}{name}"))).unwrap();
    }
}
