mod config;
mod errors;
mod io;
mod manifest;
mod mock;
mod report;
mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::errors::CliError;

/// Pipeline driver for the script-continuation benchmark.
#[derive(Parser)]
#[command(name = "coda", version, about)]
struct Cli {
    /// Path to the run configuration file.
    #[arg(long, global = true, default_value = "config.json")]
    config: PathBuf,

    /// Override the run id from the config.
    #[arg(long, global = true)]
    run_id: Option<String>,

    /// Redo the stage even if the manifest marks it complete.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for backend calls.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Cap on backend requests per second, shared across workers.
    #[arg(long, global = true)]
    rate_limit: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and split the corpus, then write the film index.
    Ingest,
    /// Detect per-film format profiles and render prompt contracts.
    Profile,
    /// Run chunked continuation generation for one model.
    Generate {
        /// Model id from the config.
        #[arg(long)]
        model: String,
    },
    /// Collect judge verdicts for one model's valid samples.
    Judge {
        /// Model id from the config.
        #[arg(long)]
        model: String,
    },
    /// Compute lexical and structural scores for one model.
    Score {
        /// Model id from the config.
        #[arg(long)]
        model: String,
    },
    /// Run the paired model comparison and write stats_report.json.
    Stats {
        /// First model of the pair (defaults to the first configured).
        #[arg(long)]
        model_a: Option<String>,
        /// Second model of the pair (defaults to the second configured).
        #[arg(long)]
        model_b: Option<String>,
    },
    /// Render report.md with its CSV tables and plot series.
    Report,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(run_id) = cli.run_id {
        config.run_id = run_id;
        config.validate()?;
    }
    let ctx = stages::Ctx {
        run_dir: config.run_dir(),
        config,
        force: cli.force,
        workers: cli.workers.max(1),
        rate_limit: cli.rate_limit,
    };
    match cli.command {
        Command::Ingest => stages::ingest(&ctx),
        Command::Profile => stages::profile(&ctx),
        Command::Generate { model } => stages::generate(&ctx, &model),
        Command::Judge { model } => stages::judge(&ctx, &model),
        Command::Score { model } => stages::score(&ctx, &model),
        Command::Stats { model_a, model_b } => {
            stages::stats(&ctx, model_a.as_deref(), model_b.as_deref())
        }
        Command::Report => stages::emit_report(&ctx),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
