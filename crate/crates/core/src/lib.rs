//! Cross-lingual retrieval-augmented advisory engine.
//!
//! A Bengali question travels through five stages:
//!
//! 1. translation into English ([`gateway::Translator`]),
//! 2. keyword enrichment against a colloquial-to-scientific rulebook ([`enrichment`]),
//! 3. exact cosine retrieval over chunked English manuals ([`index`], [`corpus`]),
//! 4. grounded generation restricted to the retrieved context ([`gateway::Generator`]),
//! 5. translation of the answer back into Bengali.
//!
//! [`pipeline::Pipeline`] runs the stages and records an [`pipeline::AnswerTrace`]
//! with per-stage timings. [`eval`] replays categorized query fixtures through the
//! pipeline and produces verdict/latency/source reports.
//!
//! The vector math is generic over the float type (see [`Scalar`]); the
//! aliases below fix it to `f32`, which is what the persisted index format
//! and the remote embedding backends use.

pub mod corpus;
pub mod enrichment;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod pipeline;
pub mod scalar;
pub mod text;

pub use scalar::Scalar;

/// Unit-normalized `f32` embedding.
pub type Embedding = gateway::EmbeddingVector<f32>;
/// Exact flat cosine index over `f32` vectors.
pub type VectorIndex = index::FlatIndex<f32>;
/// One `f32` index entry.
pub type Entry = index::IndexEntry<f32>;
/// One `f32` search hit.
pub type Hit = index::SearchHit<f32>;

/// Sentinel the generator must emit when the context does not contain the answer.
pub const UNAVAILABLE_MARKER: &str = "INFORMATION_NOT_AVAILABLE";
