use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gapnet_cli::config::Settings;
use gapnet_cli::{bench, gen, inspect, preprocess, train};

/// Molecular property regression pipeline: corpus generation, storage
/// backends, distributed training, and read-path benchmarks.
#[derive(Parser, Debug)]
#[command(name = "gapnet", version, about)]
struct Cli {
    /// Flat `key = value` settings file; flags and GAPNET_* environment
    /// variables take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic molecule corpus.
    Gen(gen::GenArgs),
    /// Parse a raw table and materialize a storage backend.
    Preprocess(preprocess::PreprocessArgs),
    /// Print the contents and layout of a store.
    Inspect(inspect::InspectArgs),
    /// Train the model over a store.
    Train(train::TrainArgs),
    /// Measure read-path throughput per backend.
    BenchIo(bench::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut settings = match Settings::load(cli.config.as_deref()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match &cli.command {
        Command::Gen(args) => gen::run(args, &mut settings),
        Command::Preprocess(args) => preprocess::run(args, &mut settings),
        Command::Inspect(args) => inspect::run(args, &mut settings),
        Command::Train(args) => train::run(args, &mut settings),
        Command::BenchIo(args) => bench::run(args, &mut settings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
