use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use krishi::corpus::ingest_corpus;
use krishi::enrichment::Rulebook;
use krishi::eval::{run_eval, write_report, ReportFormat};
use krishi::gateway::mock::DEFAULT_MOCK_SEED;
use krishi::gateway::Backends;
use krishi::pipeline::{build_index, Pipeline, PipelineConfig, PromptTemplate, Status};
use krishi::VectorIndex;
use krishi_service::config::ServiceConfig;
use krishi_service::server::{pipeline_from_config, serve};
use tracing_subscriber::EnvFilter;

const EXIT_CONFIG: u8 = 1;
const EXIT_REFUSED: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "krishi", version, about = "Bengali agricultural advisory: ingest, ask, serve, eval")]
struct Cli {
    /// Service config file (JSON).
    #[arg(long, global = true, env = "KRISHI_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk and embed a corpus directory into an index file.
    Ingest {
        dir: PathBuf,
        /// Output index; defaults to the config's `index_path`.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Answer one Bengali question.
    Ask {
        query: String,
        /// Print the full trace as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Run the HTTP API.
    Serve,
    /// Run an evaluation case file and write a JSON or CSV report.
    Eval {
        #[arg(long)]
        queries: PathBuf,
        /// `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        report: PathBuf,
    },
}

/// Failure with the exit code it maps to.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_CONFIG, e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: starting runtime: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ServiceConfig> {
    let path = path.context("--config is required for this command")?;
    Ok(ServiceConfig::load(path)?)
}

async fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { dir, index } => {
            let (pipeline, default_index) = match cli.config.as_deref() {
                Some(path) => {
                    let cfg = ServiceConfig::load(path)?;
                    (pipeline_from_config(&cfg)?, Some(cfg.index_path))
                }
                None => (default_pipeline()?, None),
            };
            let out = index
                .or(default_index)
                .context("--index is required when no config is given")?;
            let corpus = ingest_corpus(&dir, pipeline.config().chunking()?)?;
            let built = build_index(&corpus.chunks, pipeline.backends().embedder.as_ref()).await?;
            let bytes = built.save(&out)?;
            println!(
                "ingested {} document(s), {} chunk(s) into {} ({bytes} bytes)",
                corpus.documents,
                built.len(),
                out.display()
            );
            Ok(())
        }
        Command::Ask { query, json, top_k } => {
            let cfg = load_config(cli.config.as_deref())?;
            if query.trim().is_empty() {
                return Err(anyhow::anyhow!("query must not be empty").into());
            }
            let pipeline = pipeline_from_config(&cfg)?;
            let index = VectorIndex::load(&cfg.index_path)
                .with_context(|| format!("loading index {}", cfg.index_path.display()))?;
            let trace = pipeline.answer(&query, &index, top_k).await;
            if json {
                println!("{}", serde_json::to_string_pretty(&trace)?);
            } else {
                println!("{}", trace.answer_bn);
                for hit in &trace.hits {
                    println!("  [{}] {:.3} {}", hit.rank, hit.score, hit.chunk_id);
                }
            }
            match trace.status {
                Status::Answered => Ok(()),
                Status::RejectedOutOfDomain | Status::NotInContext => {
                    Err(Failure(EXIT_REFUSED, anyhow::anyhow!("query refused: {}", trace.status)))
                }
                Status::BackendError => Err(Failure(
                    EXIT_BACKEND,
                    anyhow::anyhow!(
                        "backend failure in {}: {}",
                        trace.failed_stage.map(|s| s.as_str()).unwrap_or("unknown stage"),
                        trace.error.as_deref().unwrap_or("")
                    ),
                )),
            }
        }
        Command::Serve => {
            let cfg = load_config(cli.config.as_deref())?;
            serve(&cfg).await?;
            Ok(())
        }
        Command::Eval { queries, report } => {
            let cfg = load_config(cli.config.as_deref())?;
            let pipeline = pipeline_from_config(&cfg)?;
            let index = VectorIndex::load(&cfg.index_path)
                .with_context(|| format!("loading index {}", cfg.index_path.display()))?;
            let run = run_eval(&queries, &pipeline, &index).await?;
            write_report(&run.report, &report, ReportFormat::from_path(&report))?;
            let r = &run.report;
            for (cat, s) in &r.categories {
                println!("{:<20} {}/{} passed", cat.as_str(), s.passed, s.cases);
            }
            println!(
                "overall pass rate {:.1}% over {} case(s), {} invalid; report at {}",
                r.overall_pass_rate * 100.0,
                r.metadata.cases,
                r.metadata.invalid_cases,
                report.display()
            );
            Ok(())
        }
    }
}

fn default_pipeline() -> anyhow::Result<Pipeline> {
    let config = PipelineConfig::default();
    let backends = Backends::mock(config.dim, DEFAULT_MOCK_SEED)?;
    Ok(Pipeline::new(config, Arc::new(Rulebook::bundled()), PromptTemplate::default(), backends)?)
}
