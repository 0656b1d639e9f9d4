//! Client interfaces for the three external model capabilities: embedding,
//! translation and grounded generation.
//!
//! Every capability has a JSON-over-HTTP client ([`http`]) and a
//! deterministic in-process stand-in ([`mock`]). [`Backends::from_config`]
//! picks one or the other; nothing downstream can tell them apart.

pub mod http;
pub mod mock;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar};
use crate::Embedding;

pub use http::{HttpEmbedder, HttpGenerator, HttpTranslator};
pub use mock::{mock_embed, Lexicon, MockEmbedder, MockGenerator, MockTranslator};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("vector has no components")]
    Empty,
    #[error("component {0} is not finite")]
    NonFinite(usize),
    #[error("vector has zero norm")]
    ZeroNorm,
}

#[derive(Debug, Clone, Error)]
pub enum GatewayError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error("backend {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("backend {endpoint} returned an unexpected response: {message}")]
    Protocol { endpoint: String, message: String },
}

impl GatewayError {
    /// Endpoint identity for transport and protocol failures.
    pub fn endpoint(&self) -> Option<&str> {
        match self {
            Self::Transport { endpoint, .. } | Self::Protocol { endpoint, .. } => Some(endpoint),
            _ => None,
        }
    }
}

/// A dense vector with unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<F> {
    values: Vec<F>,
}

impl<F: Scalar> EmbeddingVector<F> {
    /// Scales `values` to unit length.
    pub fn normalized(mut values: Vec<F>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        let norm = scalar::l2_norm(&values);
        if norm == F::zero() || !norm.is_finite() {
            return Err(VectorError::ZeroNorm);
        }
        values.iter_mut().for_each(|v| *v = *v / norm);
        Ok(Self { values })
    }

    /// Wraps values that are already unit-normalized (e.g. read back from an
    /// index file) without touching a single bit.
    pub(crate) fn from_unit(values: Vec<F>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn norm(&self) -> F {
        scalar::l2_norm(&self.values)
    }

    /// Cosine similarity, which for unit vectors is the dot product.
    pub fn cosine(&self, other: &Self) -> F {
        if self.dim() != other.dim() {
            return F::zero();
        }
        scalar::clamp_unit(scalar::dot(&self.values, &other.values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    BnToEn,
    EnToBn,
}

impl Direction {
    pub fn source(self) -> &'static str {
        match self {
            Self::BnToEn => "bn",
            Self::EnToBn => "en",
        }
    }

    pub fn target(self) -> &'static str {
        match self {
            Self::BnToEn => "en",
            Self::EnToBn => "bn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    /// Set when part of the input was copied through untranslated.
    pub passthrough: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, max_tokens: u32, temperature: f32) -> Result<Self, GatewayError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(GatewayError::Input("generation prompt is empty".into()));
        }
        if temperature.is_nan() || temperature < 0.0 {
            return Err(GatewayError::Input(format!("temperature {temperature} must be >= 0")));
        }
        Ok(Self {
            prompt,
            max_tokens,
            temperature,
        })
    }
}

#[async_trait]
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    async fn embed(&self, text: &str) -> Result<Embedding, GatewayError>;

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for t in texts {
            out.push(self.embed(t).await?);
        }
        Ok(out)
    }
}

#[async_trait]
pub trait Translator: Send + Sync {
    async fn translate(&self, text: &str, direction: Direction) -> Result<Translation, GatewayError>;
}

#[async_trait]
pub trait Generator: Send + Sync {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError>;
}

pub(crate) fn require_text(text: &str, what: &str) -> Result<(), GatewayError> {
    if text.trim().is_empty() {
        Err(GatewayError::Input(format!("{what} text is empty")))
    } else {
        Ok(())
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
}

impl BackendEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_ms == 0 {
            return Err(GatewayError::Input(format!("endpoint {}: timeout_ms must be > 0", self.url)));
        }
        if self.url.trim().is_empty() {
            return Err(GatewayError::Input("endpoint url is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteEndpoints {
    pub embed: BackendEndpoint,
    pub translate: BackendEndpoint,
    pub generate: BackendEndpoint,
}

/// Which implementation backs each capability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendConfig {
    Mock { seed: u64 },
    Remote(RemoteEndpoints),
}

/// The three clients a pipeline needs.
#[derive(Clone)]
pub struct Backends {
    pub embedder: Arc<dyn Embedder>,
    pub translator: Arc<dyn Translator>,
    pub generator: Arc<dyn Generator>,
}

impl Backends {
    pub fn from_config(config: &BackendConfig, dim: usize) -> Result<Self, GatewayError> {
        match config {
            BackendConfig::Mock { seed } => Ok(Self {
                embedder: Arc::new(MockEmbedder::new(dim, *seed)?),
                translator: Arc::new(MockTranslator::new(Lexicon::bundled())),
                generator: Arc::new(MockGenerator::default()),
            }),
            BackendConfig::Remote(ep) => Ok(Self {
                embedder: Arc::new(HttpEmbedder::new(ep.embed.clone(), dim)?),
                translator: Arc::new(HttpTranslator::new(ep.translate.clone())?),
                generator: Arc::new(HttpGenerator::new(ep.generate.clone())?),
            }),
        }
    }

    pub fn mock(dim: usize, seed: u64) -> Result<Self, GatewayError> {
        Self::from_config(&BackendConfig::Mock { seed }, dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let v = EmbeddingVector::normalized(vec![3.0f32, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert_eq!(EmbeddingVector::<f32>::normalized(vec![]), Err(VectorError::Empty));
        assert_eq!(EmbeddingVector::normalized(vec![0.0f64; 4]), Err(VectorError::ZeroNorm));
        assert_eq!(
            EmbeddingVector::normalized(vec![1.0f32, f32::NAN]),
            Err(VectorError::NonFinite(1))
        );
    }

    #[test]
    fn generation_request_validation() {
        assert!(GenerationRequest::new("  ", 10, 0.0).is_err());
        assert!(GenerationRequest::new("p", 10, -0.1).is_err());
        assert!(GenerationRequest::new("p", 10, f32::NAN).is_err());
        assert!(GenerationRequest::new("p", 10, 0.0).is_ok());
    }

    #[test]
    fn endpoint_validation() {
        let mut ep = BackendEndpoint::new("http://localhost:1");
        assert!(ep.validate().is_ok());
        ep.timeout_ms = 0;
        assert!(ep.validate().is_err());
    }

    #[test]
    fn endpoint_defaults_from_json() {
        let ep: BackendEndpoint = serde_json::from_str(r#"{"url":"http://x"}"#).unwrap();
        assert_eq!(ep.timeout_ms, 30_000);
        assert_eq!(ep.retries, 0);
    }
}
