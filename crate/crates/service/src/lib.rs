//! HTTP service and command-line front end for the krishi advisory engine.

pub mod config;
pub mod server;

pub use config::{ConfigError, EndpointsConfig, ServiceConfig};
pub use server::{router, serve, AppState, IngestResponse, StatsResponse};
