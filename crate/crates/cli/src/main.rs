use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use taskdiv_core::pipeline::{self, RunConfig, RunManifest, RunOptions, Stage};
use tracing_subscriber::EnvFilter;

/// Measure and compare response homogenization across sampling strategies.
#[derive(Parser)]
#[command(name = "taskdiv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config and datasets, reporting every problem found.
    Validate(Common),
    /// Ingest datasets and classify prompts into task categories.
    Classify(Common),
    /// Generate response sets for every prompt, model and strategy.
    Sample(Common),
    /// Compute diversity and quality metrics over the response sets.
    Score(Common),
    /// Aggregate metrics and write tables and plots.
    Report(Common),
    /// Run every stage.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip stages already completed under the same config.
    #[arg(long)]
    resume: bool,
    /// Use the built-in simulated model instead of vendor APIs.
    #[arg(long)]
    mock: bool,
}

impl Common {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut config =
            RunConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

fn execute(common: &Common, stages: &[Stage]) -> anyhow::Result<RunManifest> {
    let config = common.config()?;
    config.validate()?;
    let client = if common.mock {
        pipeline::mock_client(&config)?
    } else {
        pipeline::http_client(&config)?
    };
    let options = RunOptions::stages(stages)
        .resume(common.resume)
        .backend(if common.mock { "mock" } else { "live" });
    Ok(pipeline::run_pipeline(&config, &client, &options)?)
}

fn summarize(manifest: &RunManifest) {
    for (stage, marker) in &manifest.stages {
        println!(
            "{stage:<10} complete  records={:<6} failed_prompts={}",
            marker.records, marker.failed_prompts
        );
    }
    println!(
        "provider calls: {}  cache hits: {}",
        manifest.last_invocation.network_calls, manifest.last_invocation.cache_hits
    );
    println!("output: {}", manifest.config.output_dir.display());
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => c.config().and_then(|config| {
            config.validate()?;
            println!(
                "config OK: {} dataset(s), {} model(s), {} strategies, k={}",
                config.datasets.len(),
                config.models.len(),
                config.strategy_specs()?.len(),
                config.k
            );
            Ok(())
        }),
        Command::Classify(c) => execute(c, &[Stage::Ingest, Stage::Classify]).map(|m| summarize(&m)),
        Command::Sample(c) => execute(c, &[Stage::Sample]).map(|m| summarize(&m)),
        Command::Score(c) => execute(c, &[Stage::Diversity, Stage::Quality]).map(|m| summarize(&m)),
        Command::Report(c) => execute(c, &[Stage::Aggregate, Stage::Report]).map(|m| summarize(&m)),
        Command::Run(c) => execute(c, &Stage::ALL).map(|m| summarize(&m)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
