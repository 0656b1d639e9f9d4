//! Service configuration file.
//!
//! ```json
//! {
//!   "listen": "127.0.0.1:8080",
//!   "index_path": "krishi.idx",
//!   "rulebook_path": "rules.json",
//!   "prompt_template_path": "prompt.txt",
//!   "endpoints": "mock",
//!   "pipeline": {"chunk_size": 600, "chunk_overlap": 50, "top_k": 4, "ood_threshold": 0.25, "dim": 384},
//!   "cors_origins": ["http://localhost:5173"]
//! }
//! ```
//!
//! `endpoints` is either the string `"mock"` or an object with `embed`,
//! `translate` and `generate` endpoints (`{"url", "timeout_ms", "retries"}`).
//! Relative paths resolve against the directory holding the config file.
//! `KRISHI_LISTEN`, `KRISHI_EMBED_URL`, `KRISHI_TRANSLATE_URL` and
//! `KRISHI_GENERATE_URL` override the corresponding values.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use krishi::gateway::mock::DEFAULT_MOCK_SEED;
use krishi::gateway::{BackendConfig, BackendEndpoint, RemoteEndpoints};
use krishi::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config {path} does not match the schema: {message}")]
    Schema { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EndpointsConfig {
    Keyword(String),
    Remote(RemoteEndpoints),
}

impl Default for EndpointsConfig {
    fn default() -> Self {
        Self::Keyword("mock".into())
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_seed() -> u64 {
    DEFAULT_MOCK_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub index_path: PathBuf,
    pub rulebook_path: PathBuf,
    pub prompt_template_path: PathBuf,
    #[serde(default)]
    pub endpoints: EndpointsConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    /// Seed for the mock embedder.
    #[serde(default = "default_seed")]
    pub mock_seed: u64,
    /// Whether `POST /v1/ingest` is served.
    #[serde(default = "yes")]
    pub ingest_enabled: bool,
}

fn yes() -> bool {
    true
}

impl ServiceConfig {
    /// Reads, resolves, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg: ServiceConfig = serde_json::from_str(&raw).map_err(|e| ConfigError::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.index_path, &mut self.rulebook_path, &mut self.prompt_template_path] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(listen) = get("KRISHI_LISTEN") {
            self.listen = listen;
        }
        let urls = [
            get("KRISHI_EMBED_URL"),
            get("KRISHI_TRANSLATE_URL"),
            get("KRISHI_GENERATE_URL"),
        ];
        match &mut self.endpoints {
            EndpointsConfig::Remote(ep) => {
                for (slot, url) in [&mut ep.embed, &mut ep.translate, &mut ep.generate].into_iter().zip(urls) {
                    if let Some(url) = url {
                        slot.url = url;
                    }
                }
            }
            EndpointsConfig::Keyword(_) => {
                if let [Some(e), Some(t), Some(g)] = urls {
                    self.endpoints = EndpointsConfig::Remote(RemoteEndpoints {
                        embed: BackendEndpoint::new(e),
                        translate: BackendEndpoint::new(t),
                        generate: BackendEndpoint::new(g),
                    });
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let addr: SocketAddr = self
            .listen
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("listen {:?}: {e}", self.listen)))?;
        if addr.port() == 0 {
            return Err(ConfigError::Invalid("listen port must be in 1..=65535".into()));
        }
        self.backend()?;
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("pipeline: {e}")))?;
        for (what, p) in [("rulebook_path", &self.rulebook_path), ("prompt_template_path", &self.prompt_template_path)] {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!("{what} {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> SocketAddr {
        self.listen.parse().expect("validated")
    }

    pub fn backend(&self) -> Result<BackendConfig, ConfigError> {
        match &self.endpoints {
            EndpointsConfig::Keyword(k) if k == "mock" => Ok(BackendConfig::Mock { seed: self.mock_seed }),
            EndpointsConfig::Keyword(k) => Err(ConfigError::Invalid(format!(
                "endpoints must be \"mock\" or an object, got {k:?}"
            ))),
            EndpointsConfig::Remote(ep) => {
                for e in [&ep.embed, &ep.translate, &ep.generate] {
                    e.validate().map_err(|err| ConfigError::Invalid(err.to_string()))?;
                }
                Ok(BackendConfig::Remote(ep.clone()))
            }
        }
    }
}
