//! Batch CLI for the chest X-ray training pipeline: exploratory data
//! analysis, segmentation + augmentation, stratified splitting,
//! training runs, and curve analytics.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "cxrpipe",
    version,
    about = "Lung-segmentation, augmentation, and CNN training pipeline for chest X-rays"
)]
struct Cli {
    /// Pipeline config file (flat `key = value`; see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override: sets split.seed, model.seed, and train.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Process at the full 2048x2048 resolution.
    #[arg(long, global = true)]
    full_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label, demographic, and area distributions of the manifest.
    Eda,
    /// Segment, normalize, resize, and expand the dataset to disk.
    Prepare,
    /// Write stratified train/val/test id lists.
    Split,
    /// Train one or more runs on the prepared dataset.
    Train {
        /// Number of independent runs (default: train.runs from config).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Aggregate run logs, smooth, diagnose, and plot.
    Analyze {
        /// Directory holding run-*.csv files (default: <out>/runs).
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    cfg.apply_overrides(cli.seed, cli.out.as_deref(), cli.full_scale)?;

    match cli.command {
        Command::Eda => commands::eda::run(&cfg),
        Command::Prepare => commands::prepare::run(&cfg),
        Command::Split => commands::split::run(&cfg),
        Command::Train { runs } => commands::train::run(&cfg, runs),
        Command::Analyze { run_dir } => commands::analyze::run(&cfg, run_dir.as_deref()),
    }
}
