//! `dadp`: command-line front end for the decomposition solvers.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dadp", version, about = "Price decomposition of multi-unit stochastic optimal control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a problem file and print its validation report.
    Validate {
        /// Problem file; `--problem` works too.
        file: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Solve the whole problem by grid dynamic programming.
    SolveDp {
        #[command(flatten)]
        opts: Opts,
    },
    /// Run the price decomposition loop.
    SolveDadp {
        #[command(flatten)]
        opts: Opts,
    },
    /// Simulate the global DP policy on scenarios.
    Simulate {
        #[command(flatten)]
        opts: Opts,
    },
    /// Closed-form prices of a reservoir problem along scenarios.
    Oracle {
        /// Reservoir parameters (JSON).
        #[arg(long)]
        strugarek: PathBuf,
        /// Scenario CSV; every tree path when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[command(flatten)]
        opts: Opts,
    },
    /// Write a benchmark problem as JSON.
    Generate {
        #[arg(value_enum)]
        kind: GenerateKind,
        /// Number of units (independent, multistock).
        #[arg(long, default_value_t = 2)]
        units: usize,
        /// Horizon (multistock).
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        /// Add a shared noise (independent).
        #[arg(long)]
        shared: bool,
        /// Parameter file (three-unit, strugarek).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Destination file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GenerateKind {
    Tiny,
    ThreeUnit,
    Independent,
    Multistock,
    Strugarek,
}

#[derive(clap::Args, Debug)]
struct Opts {
    /// JSON file with default values for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: RunConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
