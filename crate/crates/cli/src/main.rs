//! `gst`: grounded spatial-reasoning toolkit.
//!
//! Single binary with subcommands covering the pipeline: validate scene
//! bundles, encode patch features, generate grounded QA datasets, render
//! bird's-eye views, solve metric scale, and score predictions.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage or format error.
//! Every subcommand is reproducible from its inputs, flags, and seed.

mod commands;
mod config;
mod errors;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;
use errors::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "gst",
    version,
    about = "Grounded spatial-reasoning toolkit",
    long_about = "Pipeline tools for RGB-D scene bundles: ingest validation, patch-feature \
                  encoding, grounded QA dataset generation, bird's-eye-view rendering, metric \
                  scale alignment, and evaluation.\n\nExit codes: 0 success, 1 runtime error, \
                  2 usage or format error. Flags override GST_* environment variables, which \
                  override the --config file."
)]
struct Cli {
    /// TOML configuration file (see docs/cli.md); flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for multi-scene work; default uses all cores.
    /// Output is identical for every job count.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate scene bundles and print per-bundle summaries.
    Ingest(commands::ingest::IngestArgs),
    /// Encode a scene bundle into a patch-feature file.
    Encode(commands::encode::EncodeArgs),
    /// Generate a grounded QA dataset from scene bundles.
    Gen(commands::gen::GenArgs),
    /// Render a bird's-eye view of a scene bundle.
    Bev(commands::bev::BevArgs),
    /// Solve the metric scale between two point sets.
    Align(commands::align::AlignArgs),
    /// Score predictions against a dataset (or a dataset against itself).
    Eval(commands::eval::EvalArgs),
    /// Write the built-in demo scene bundle.
    Fixture(commands::fixture::FixtureArgs),
}

fn run(cli: &Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    config::init_jobs(cli.jobs)?;
    match &cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Encode(args) => commands::encode::run(args, &file),
        Command::Gen(args) => commands::gen::run(args, &file),
        Command::Bev(args) => commands::bev::run(args, &file),
        Command::Align(args) => commands::align::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Fixture(args) => commands::fixture::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gst: {e}");
            e.exit_code()
        }
    }
}
