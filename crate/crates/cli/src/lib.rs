//! Command-line front end. Every command writes its outputs and a
//! `manifest.json` into one directory that appears atomically.
//!
//! Exit codes: 0 success, 1 data or I/O error, 2 usage error.

use std::ffi::OsString;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub mod analyze;
pub mod build_db;
pub mod error;
pub mod manifest;
pub mod output;
pub mod report;
pub mod simulate;

pub use analyze::{analyze, AnalyzeArgs};
pub use build_db::{build_db, BuildDbArgs};
pub use error::{CliError, Result};
pub use manifest::RunManifest;
pub use report::{report, ReportArgs};
pub use simulate::{simulate, ScenarioArg, SimulateArgs};

#[derive(Debug, Parser)]
#[command(name = "kmerstream", version, about = "Sorted k-mer streaming metagenomic analysis")]
pub struct Cli {
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the k-mer database, sketch tables and species indexes.
    BuildDb(BuildDbArgs),
    /// Find the species present in a read set and estimate their abundance.
    Analyze(AnalyzeArgs),
    /// Run one simulated SSD experiment.
    Simulate(SimulateArgs),
    /// Join the manifests and results of several runs into one table.
    Report(ReportArgs),
}

/// Runs a parsed command on a pool capped at `--threads` workers.
pub fn execute(cli: Cli) -> Result<RunManifest> {
    let start = Instant::now();
    let threads = cli.threads;
    let run = move || match cli.command {
        Command::BuildDb(a) => build_db(&a, start),
        Command::Analyze(a) => analyze(&a, start),
        Command::Simulate(a) => simulate(&a, start),
        Command::Report(a) => report(&a, start),
    };
    match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(run),
        None => run(),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match execute(cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
