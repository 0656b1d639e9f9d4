//! JSON-over-HTTP clients.
//!
//! | capability | request                                            | response                      |
//! |------------|----------------------------------------------------|-------------------------------|
//! | embed      | `POST {url}/embed {"texts": [..]}`                 | `{"vectors": [[..]], "dim": n}` |
//! | translate  | `POST {url}/translate {"text", "source", "target"}`| `{"text": ".."}`              |
//! | generate   | `POST {url}/generate {"prompt", "max_tokens", "temperature"}` | `{"text": ".."}`   |
//!
//! Any non-2xx status is a transport error. Each call is attempted at most
//! `1 + retries` times, and every error carries the endpoint URL.

use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{require_text, BackendEndpoint, Direction, Embedder, EmbeddingVector, GatewayError, GenerationRequest, Generator, Translation, Translator};
use crate::Embedding;

const EMBED_BATCH: usize = 32;

#[derive(Debug, Clone)]
struct JsonClient {
    endpoint: BackendEndpoint,
    http: reqwest::Client,
}

impl JsonClient {
    fn new(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Transport {
                endpoint: endpoint.url.clone(),
                message: e.to_string(),
            })?;
        Ok(Self { endpoint, http })
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.endpoint.url.trim_end_matches('/'))
    }

    async fn post<Req: Serialize + Sync, Resp: DeserializeOwned>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp, GatewayError> {
        let url = self.url(route);
        let mut last = None;
        for attempt in 0..=self.endpoint.retries {
            match self.post_once(&url, body).await {
                Ok(resp) => return Ok(resp),
                Err(e @ GatewayError::Protocol { .. }) => return Err(e),
                Err(e) => {
                    debug!(%url, attempt, error = %e, "backend call failed");
                    last = Some(e);
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }

    async fn post_once<Req: Serialize + Sync, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, GatewayError> {
        let transport = |message: String| GatewayError::Transport {
            endpoint: url.to_string(),
            message,
        };
        let resp = self
            .http
            .post(url)
            .json(body)
            .send()
            .await
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(transport(format!("HTTP {status}: {text}")));
        }
        let bytes = resp.bytes().await.map_err(|e| transport(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| GatewayError::Protocol {
            endpoint: url.to_string(),
            message: e.to_string(),
        })
    }

    fn protocol(&self, route: &str, message: String) -> GatewayError {
        GatewayError::Protocol {
            endpoint: self.url(route),
            message,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
    dim: usize,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'static str,
    target: &'static str,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
    dim: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: BackendEndpoint, dim: usize) -> Result<Self, GatewayError> {
        Ok(Self {
            client: JsonClient::new(endpoint)?,
            dim,
        })
    }
}

#[async_trait]
impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    async fn embed(&self, text: &str) -> Result<Embedding, GatewayError> {
        require_text(text, "embedding")?;
        let mut out = self.embed_batch(&[text.to_string()]).await?;
        Ok(out.remove(0))
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(EMBED_BATCH) {
            for t in batch {
                require_text(t, "embedding")?;
            }
            let resp: EmbedResponse = self.client.post("embed", &EmbedRequest { texts: batch }).await?;
            if resp.vectors.len() != batch.len() {
                return Err(self.client.protocol(
                    "embed",
                    format!("{} vectors for {} texts", resp.vectors.len(), batch.len()),
                ));
            }
            for v in resp.vectors {
                if resp.dim != self.dim || v.len() != self.dim {
                    return Err(self.client.protocol(
                        "embed",
                        format!("expected dim {}, got {} (declared {})", self.dim, v.len(), resp.dim),
                    ));
                }
                out.push(EmbeddingVector::normalized(v).map_err(|e| self.client.protocol("embed", e.to_string()))?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct HttpTranslator {
    client: JsonClient,
}

impl HttpTranslator {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        Ok(Self {
            client: JsonClient::new(endpoint)?,
        })
    }
}

#[async_trait]
impl Translator for HttpTranslator {
    async fn translate(&self, text: &str, direction: Direction) -> Result<Translation, GatewayError> {
        require_text(text, "translation")?;
        let req = TranslateRequest {
            text,
            source: direction.source(),
            target: direction.target(),
        };
        let resp: TextResponse = self.client.post("translate", &req).await?;
        Ok(Translation {
            text: resp.text,
            passthrough: false,
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpGenerator {
    client: JsonClient,
}

impl HttpGenerator {
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, GatewayError> {
        Ok(Self {
            client: JsonClient::new(endpoint)?,
        })
    }
}

#[async_trait]
impl Generator for HttpGenerator {
    async fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        require_text(&request.prompt, "generation")?;
        let resp: TextResponse = self.client.post("generate", request).await?;
        Ok(resp.text)
    }
}
