use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use ptmevo_core::pipeline::{load_config, Outcome, Pipeline, PipelineError, Stage};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;

/// Mines how downstream projects adopt, drop and swap pre-trained models
/// across releases, and compares that with ordinary library dependencies.
#[derive(Debug, Parser)]
#[command(name = "ptmevo", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "ptmevo.toml")]
    config: PathBuf,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-repository and per-line work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Re-run stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and record the reuse-signature catalog.
    Catalog,
    /// Filter releases and reconstruct release lines.
    Lines,
    /// Extract PTM snapshots for every release.
    Snapshot,
    /// Detect PTM change events between adjacent releases.
    Diff,
    /// Mine dependency manifests for the library baseline.
    Baseline,
    /// Gather documentation artifacts and export annotation sheets.
    Harvest,
    /// Compute frequency, cadence, growth, lifecycle and documentation metrics.
    Metrics,
    /// Run the PTM-vs-library significance tests.
    Stats,
    /// Write summary, per-line, statistics and documentation reports.
    Report,
    /// Check referential integrity of the run store.
    Check,
    /// Run every stage in order, skipping fresh ones.
    Run {
        /// Stages to leave out (comma separated), e.g. `baseline`.
        #[arg(long, value_delimiter = ',')]
        skip: Vec<Stage>,
    },
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Catalog => Stage::Catalog,
            Command::Lines => Stage::Lines,
            Command::Snapshot => Stage::Snapshot,
            Command::Diff => Stage::Diff,
            Command::Baseline => Stage::Baseline,
            Command::Harvest => Stage::Harvest,
            Command::Metrics => Stage::Metrics,
            Command::Stats => Stage::Stats,
            Command::Report => Stage::Report,
            Command::Check | Command::Run { .. } => return None,
        })
    }
}

fn exit_code(e: &PipelineError) -> u8 {
    match e {
        PipelineError::Config(_) => EXIT_CONFIG,
        PipelineError::Stage { .. } | PipelineError::Prereq(_) => EXIT_STAGE,
        PipelineError::Integrity(_) => EXIT_INTEGRITY,
    }
}

fn show(stage: Stage, outcome: Outcome) {
    match outcome {
        Outcome::Ran => println!("{stage}: done"),
        Outcome::Skipped => println!("{stage}: up to date"),
    }
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let mut config = load_config(&cli.config)?;
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    let mut pipeline = Pipeline::new(config)?;
    pipeline.force = cli.force;
    info!("store at {}", pipeline.store.root().display());
    match &cli.command {
        Command::Check => {
            let problems = pipeline.check()?;
            if !problems.is_empty() {
                for p in &problems {
                    eprintln!("{p}");
                }
                return Err(PipelineError::Integrity(problems));
            }
            println!("store ok");
        }
        Command::Run { skip } => {
            for (stage, outcome) in pipeline.run_all(skip)? {
                show(stage, outcome);
            }
        }
        cmd => {
            let stage = cmd.stage().expect("stage command");
            show(stage, pipeline.run_stage(stage)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool");
        if let Err(e) = pool {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
