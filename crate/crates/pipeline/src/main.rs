use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fineforge::{Pipeline, PipelineConfig, PipelineError, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "fineforge", version, about = "Turn documents into instruction-answer training data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Continue interrupted stages from their last checkpoint.
    #[arg(long, global = true)]
    resume: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run every stage in order.
    Run,
    /// Turn raw queries into templates and decontaminate the bank.
    Genericize,
    /// Write compatible-document descriptions for a document sample.
    Describe,
    /// Embed templates and documents.
    Embed,
    /// Build the template similarity index.
    Index,
    /// Retrieve candidate templates per document chunk.
    Match,
    /// Pick templates per document by complexity.
    Sample,
    /// Fill templates against their documents.
    Instantiate,
    /// Resolve answer excerpts into document text.
    Expand,
    /// Score each instruction-answer pair.
    Judge,
    /// Keep pairs at or above the judge threshold.
    Filter,
    /// Pack pairs into token-budgeted training records.
    Pack,
    /// Report dataset statistics.
    Stats,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Run => return None,
            Command::Genericize => Stage::Genericize,
            Command::Describe => Stage::Describe,
            Command::Embed => Stage::Embed,
            Command::Index => Stage::Index,
            Command::Match => Stage::Match,
            Command::Sample => Stage::Sample,
            Command::Instantiate => Stage::Instantiate,
            Command::Expand => Stage::Expand,
            Command::Judge => Stage::Judge,
            Command::Filter => Stage::Filter,
            Command::Pack => Stage::Pack,
            Command::Stats => Stage::Stats,
        })
    }
}

enum Failure {
    Config(anyhow::Error),
    Stage(anyhow::Error),
}

fn pipeline_failure(e: PipelineError) -> Failure {
    if e.is_config() {
        Failure::Config(e.into())
    } else {
        Failure::Stage(e.into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .context("--config is required")
        .map_err(Failure::Config)?;
    let cfg = PipelineConfig::load(&path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Config)?;
    let opts = RunOptions {
        resume: cli.resume,
        seed: cli.seed,
        workers: cli.workers,
        halt_after_checkpoints: None,
    };
    let pipeline = Pipeline::new(cfg, opts).map_err(pipeline_failure)?;
    let reports = match cli.command.stage() {
        Some(stage) => vec![pipeline.run_stage(stage).map_err(pipeline_failure)?],
        None => pipeline.run_all().map_err(pipeline_failure)?,
    };
    for r in reports {
        println!("{}", serde_json::to_string(&r).expect("report serializes"));
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
