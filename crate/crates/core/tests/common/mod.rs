#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use krishi::corpus::ingest_corpus;
use krishi::enrichment::Rulebook;
use krishi::gateway::mock::DEFAULT_MOCK_SEED;
use krishi::gateway::Backends;
use krishi::pipeline::{build_index, Pipeline, PipelineConfig, PromptTemplate};
use krishi::VectorIndex;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus_dir() -> PathBuf {
    fixtures().join("corpus")
}

pub fn cases_path() -> PathBuf {
    fixtures().join("eval_cases.jsonl")
}

pub fn config() -> PipelineConfig {
    PipelineConfig::default()
}

pub fn pipeline_with(config: PipelineConfig, backends: Backends) -> Pipeline {
    Pipeline::new(config, Arc::new(Rulebook::bundled()), PromptTemplate::default(), backends).unwrap()
}

pub fn mock_backends(config: &PipelineConfig) -> Backends {
    Backends::mock(config.dim, DEFAULT_MOCK_SEED).unwrap()
}

pub async fn fixture_index(config: &PipelineConfig) -> VectorIndex {
    let ingested = ingest_corpus(&corpus_dir(), config.chunking().unwrap()).unwrap();
    build_index(&ingested.chunks, mock_backends(config).embedder.as_ref()).await.unwrap()
}

pub async fn fixture() -> (Pipeline, VectorIndex) {
    let cfg = config();
    let index = fixture_index(&cfg).await;
    (pipeline_with(cfg.clone(), mock_backends(&cfg)), index)
}
