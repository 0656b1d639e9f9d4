//! Five-stage answer pipeline with grounding and out-of-domain gates.
//!
//! translate_in → enrich → retrieve → generate → translate_out
//!
//! After retrieval, a query whose best cosine score is below
//! `ood_threshold` is refused without calling the generator. After
//! generation, an answer containing [`UNAVAILABLE_MARKER`] becomes a
//! not-in-context refusal. Refusals are fixed Bengali strings from the
//! configuration and are never machine translated.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Chunk, ChunkingConfig, DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE};
use crate::enrichment::{enrich, Rulebook};
use crate::gateway::{Backends, Direction, Embedder, GatewayError, GenerationRequest};
use crate::index::{ChunkMeta, IndexEntry};
use crate::{Hit, VectorIndex, UNAVAILABLE_MARKER};

const BUNDLED_TEMPLATE: &str = include_str!("../data/prompt.txt");

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_OOD_THRESHOLD: f32 = 0.25;
pub const DEFAULT_DIM: usize = 384;
pub const DEFAULT_REFUSAL_OOD: &str =
    "দুঃখিত, এই প্রশ্নটি কৃষি তথ্যভান্ডারের বিষয়ের বাইরে। অনুগ্রহ করে ফসল, রোগবালাই বা সার প্রয়োগ সম্পর্কে জিজ্ঞাসা করুন।";
pub const DEFAULT_REFUSAL_NOT_IN_CONTEXT: &str =
    "দুঃখিত, সংগৃহীত কৃষি নির্দেশিকাগুলোতে এই প্রশ্নের উত্তর পাওয়া যায়নি।";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("prompt template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("cannot build a grounded prompt without retrieved context")]
    NoContext,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] crate::index::IndexError),
    #[error("reading {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Answered,
    RejectedOutOfDomain,
    NotInContext,
    BackendError,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Answered => "answered",
            Self::RejectedOutOfDomain => "rejected_out_of_domain",
            Self::NotInContext => "not_in_context",
            Self::BackendError => "backend_error",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TranslateIn,
    Enrich,
    Retrieve,
    Generate,
    TranslateOut,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::TranslateIn,
        Stage::Enrich,
        Stage::Retrieve,
        Stage::Generate,
        Stage::TranslateOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TranslateIn => "translate_in",
            Self::Enrich => "enrich",
            Self::Retrieve => "retrieve",
            Self::Generate => "generate",
            Self::TranslateOut => "translate_out",
        }
    }
}

/// Wall-clock milliseconds per stage; skipped stages stay at zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub translate_in: f64,
    pub enrich: f64,
    pub retrieve: f64,
    pub generate: f64,
    pub translate_out: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::TranslateIn => self.translate_in,
            Stage::Enrich => self.enrich,
            Stage::Retrieve => self.retrieve,
            Stage::Generate => self.generate,
            Stage::TranslateOut => self.translate_out,
        }
    }

    fn set(&mut self, stage: Stage, ms: f64) {
        match stage {
            Stage::TranslateIn => self.translate_in = ms,
            Stage::Enrich => self.enrich = ms,
            Stage::Retrieve => self.retrieve = ms,
            Stage::Generate => self.generate = ms,
            Stage::TranslateOut => self.translate_out = ms,
        }
    }

    pub fn stage_sum(&self) -> f64 {
        Stage::ALL.iter().map(|&s| self.get(s)).sum()
    }
}

/// Everything that happened while answering one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTrace {
    pub query_bn: String,
    pub query_en: String,
    pub translation_passthrough: bool,
    pub enriched_query: String,
    pub matched_rules: Vec<String>,
    pub injected_terms: Vec<String>,
    pub hits: Vec<Hit>,
    pub prompt: String,
    pub answer_en: String,
    pub answer_bn: String,
    pub status: Status,
    pub timings_ms: StageTimings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AnswerTrace {
    fn new(query_bn: &str) -> Self {
        Self {
            query_bn: query_bn.to_string(),
            query_en: String::new(),
            translation_passthrough: false,
            enriched_query: String::new(),
            matched_rules: Vec::new(),
            injected_terms: Vec::new(),
            hits: Vec::new(),
            prompt: String::new(),
            answer_en: String::new(),
            answer_bn: String::new(),
            status: Status::BackendError,
            timings_ms: StageTimings::default(),
            failed_stage: None,
            error: None,
        }
    }

    pub fn top_source(&self) -> Option<&str> {
        self.hits.first().map(|h| h.meta.source_name.as_str())
    }
}

fn default_chunk_size() -> usize {
    DEFAULT_CHUNK_SIZE
}
fn default_chunk_overlap() -> usize {
    DEFAULT_CHUNK_OVERLAP
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}
fn default_ood_threshold() -> f32 {
    DEFAULT_OOD_THRESHOLD
}
fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_max_tokens() -> u32 {
    512
}
fn default_refusal_ood() -> String {
    DEFAULT_REFUSAL_OOD.to_string()
}
fn default_refusal_nic() -> String {
    DEFAULT_REFUSAL_NOT_IN_CONTEXT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_chunk_size")]
    pub chunk_size: usize,
    #[serde(default = "default_chunk_overlap")]
    pub chunk_overlap: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_ood_threshold")]
    pub ood_threshold: f32,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default = "default_refusal_ood")]
    pub refusal_out_of_domain: String,
    #[serde(default = "default_refusal_nic")]
    pub refusal_not_in_context: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.chunking()?;
        if self.top_k < 1 {
            return Err(PipelineError::Config("top_k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ood_threshold) {
            return Err(PipelineError::Config(format!(
                "ood_threshold {} must lie in [0, 1]",
                self.ood_threshold
            )));
        }
        if self.dim == 0 {
            return Err(PipelineError::Config("dim must be > 0".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(PipelineError::Config("temperature must be >= 0".into()));
        }
        if self.refusal_out_of_domain.trim().is_empty() || self.refusal_not_in_context.trim().is_empty() {
            return Err(PipelineError::Config("refusal messages must be non-empty".into()));
        }
        if self.refusal_out_of_domain == self.refusal_not_in_context {
            return Err(PipelineError::Config(
                "out-of-domain and not-in-context refusals must differ".into(),
            ));
        }
        Ok(())
    }

    pub fn chunking(&self) -> Result<ChunkingConfig, PipelineError> {
        ChunkingConfig::new(self.chunk_size, self.chunk_overlap).map_err(|e| PipelineError::Config(e.to_string()))
    }
}

/// Prompt text with `{context}` and `{question}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    raw: String,
}

const CONTEXT_SLOT: &str = "{context}";
const QUESTION_SLOT: &str = "{question}";

impl PromptTemplate {
    pub fn parse(raw: impl Into<String>) -> Result<Self, PipelineError> {
        let raw = raw.into();
        for slot in [CONTEXT_SLOT, QUESTION_SLOT] {
            if !raw.contains(slot) {
                return Err(PipelineError::MissingPlaceholder(slot));
            }
        }
        Ok(Self { raw })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = fs::read_to_string(path).map_err(|e| PipelineError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }

    /// Single pass substitution; inserted text is never re-scanned.
    fn render(&self, context: &str, question: &str) -> String {
        let mut out = String::with_capacity(self.raw.len() + context.len() + question.len());
        let mut rest = self.raw.as_str();
        loop {
            let next = [(CONTEXT_SLOT, context), (QUESTION_SLOT, question)]
                .into_iter()
                .filter_map(|(slot, value)| rest.find(slot).map(|at| (at, slot, value)))
                .min_by_key(|&(at, ..)| at);
            match next {
                Some((at, slot, value)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(value);
                    rest = &rest[at + slot.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(BUNDLED_TEMPLATE).expect("bundled template has both placeholders")
    }
}

/// Source tag for one hit: `[FAO, page 3]`, or `[FAO]` without a page.
pub fn source_tag(hit: &Hit) -> String {
    match hit.meta.page {
        Some(p) => format!("[{}, page {p}]", hit.meta.source_name),
        None => format!("[{}]", hit.meta.source_name),
    }
}

/// Fills the template with the ranked context block and the question.
pub fn build_grounded_prompt(question_en: &str, hits: &[Hit], template: &PromptTemplate) -> Result<String, PipelineError> {
    if hits.is_empty() {
        return Err(PipelineError::NoContext);
    }
    let context = hits
        .iter()
        .map(|h| format!("{} {}", source_tag(h), h.meta.text))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(template.render(&context, question_en))
}

/// True when there are no hits or the best score is strictly below `threshold`.
pub fn reject_out_of_domain(hits: &[Hit], threshold: f32) -> bool {
    hits.iter().map(|h| h.score).fold(None, |m: Option<f32>, s| Some(m.map_or(s, |m| m.max(s))))
        .is_none_or(|best| best < threshold)
}

/// Counts retrieved hits per source over a set of traces.
pub fn source_distribution<'a>(traces: impl IntoIterator<Item = &'a AnswerTrace>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for t in traces {
        for h in &t.hits {
            *out.entry(h.meta.source_name.clone()).or_default() += 1;
        }
    }
    out
}

/// Embeds chunks into a fresh index.
pub async fn build_index(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<VectorIndex, PipelineError> {
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embedder.embed_batch(&texts).await?;
    let mut index = VectorIndex::new(embedder.dim());
    index.add(
        chunks
            .iter()
            .zip(vectors)
            .map(|(c, vector)| IndexEntry {
                chunk_id: c.chunk_id.clone(),
                vector,
                meta: ChunkMeta {
                    doc_id: c.doc_id.clone(),
                    source_name: c.source_name.clone(),
                    page: c.page,
                    text: c.text.clone(),
                },
            })
            .collect(),
    )?;
    Ok(index)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

#[derive(Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    rulebook: Arc<Rulebook>,
    template: PromptTemplate,
    backends: Backends,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        rulebook: Arc<Rulebook>,
        template: PromptTemplate,
        backends: Backends,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if backends.embedder.dim() != config.dim {
            return Err(PipelineError::Config(format!(
                "embedder dim {} differs from configured dim {}",
                backends.embedder.dim(),
                config.dim
            )));
        }
        Ok(Self {
            config,
            rulebook,
            template,
            backends,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn rulebook(&self) -> &Rulebook {
        &self.rulebook
    }

    /// Answers one query against `index`. Backend failures end up in the
    /// trace as [`Status::BackendError`]; this never returns an error.
    pub async fn answer(&self, query_bn: &str, index: &VectorIndex, top_k: Option<usize>) -> AnswerTrace {
        let started = Instant::now();
        let mut trace = AnswerTrace::new(query_bn);
        if let Err((stage, err)) = self.run(&mut trace, index, top_k.unwrap_or(self.config.top_k)).await {
            tracing::warn!(stage = stage.as_str(), error = %err, "pipeline stage failed");
            trace.status = Status::BackendError;
            trace.failed_stage = Some(stage);
            trace.error = Some(err.to_string());
        }
        trace.timings_ms.total = ms_since(started);
        trace
    }

    async fn run(&self, trace: &mut AnswerTrace, index: &VectorIndex, top_k: usize) -> Result<(), (Stage, PipelineError)> {
        let fail = |stage: Stage| move |e: PipelineError| (stage, e);

        let t = Instant::now();
        let translated = self
            .backends
            .translator
            .translate(&trace.query_bn, Direction::BnToEn)
            .await
            .map_err(|e| (Stage::TranslateIn, e.into()));
        trace.timings_ms.set(Stage::TranslateIn, ms_since(t));
        let translated = translated?;
        trace.query_en = translated.text;
        trace.translation_passthrough = translated.passthrough;

        let t = Instant::now();
        let enriched = enrich(&trace.query_bn, &trace.query_en, &self.rulebook);
        trace.timings_ms.set(Stage::Enrich, ms_since(t));
        trace.enriched_query = enriched.enriched_query;
        trace.matched_rules = enriched.matched_rules;
        trace.injected_terms = enriched.injected_terms;

        let t = Instant::now();
        let hits = self.retrieve(&trace.enriched_query, index, top_k).await;
        trace.timings_ms.set(Stage::Retrieve, ms_since(t));
        trace.hits = hits.map_err(fail(Stage::Retrieve))?;

        if reject_out_of_domain(&trace.hits, self.config.ood_threshold) {
            trace.status = Status::RejectedOutOfDomain;
            trace.answer_bn = self.config.refusal_out_of_domain.clone();
            return Ok(());
        }

        let t = Instant::now();
        let generated = self.generate(trace).await;
        trace.timings_ms.set(Stage::Generate, ms_since(t));
        trace.answer_en = generated.map_err(fail(Stage::Generate))?;

        if trace.answer_en.trim().contains(UNAVAILABLE_MARKER) {
            trace.status = Status::NotInContext;
            trace.answer_bn = self.config.refusal_not_in_context.clone();
            return Ok(());
        }

        let t = Instant::now();
        let back = self
            .backends
            .translator
            .translate(&trace.answer_en, Direction::EnToBn)
            .await;
        trace.timings_ms.set(Stage::TranslateOut, ms_since(t));
        let back = back.map_err(|e| (Stage::TranslateOut, e.into()))?;
        if back.text.trim().is_empty() {
            return Err((
                Stage::TranslateOut,
                PipelineError::Config("translation backend returned an empty answer".into()),
            ));
        }
        trace.answer_bn = back.text;
        trace.status = Status::Answered;
        Ok(())
    }

    async fn retrieve(&self, query: &str, index: &VectorIndex, top_k: usize) -> Result<Vec<Hit>, PipelineError> {
        let q = self.backends.embedder.embed(query).await?;
        Ok(index.search_top_k(&q, top_k)?)
    }

    async fn generate(&self, trace: &mut AnswerTrace) -> Result<String, PipelineError> {
        trace.prompt = build_grounded_prompt(&trace.enriched_query, &trace.hits, &self.template)?;
        let req = GenerationRequest::new(trace.prompt.clone(), self.config.max_tokens, self.config.temperature)?;
        Ok(self.backends.generator.generate(&req).await?)
    }
}
