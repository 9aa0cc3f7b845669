//! `hypstab`: synthesize, simulate and verify boundary feedback for
//! scenarios described in TOML.
//!
//! Output files go to `$HYPSTAB_OUT_DIR`, else the scenario's `output_dir`,
//! else `./out`:
//!
//! | command    | files                                                        |
//! |------------|--------------------------------------------------------------|
//! | `synth`    | `<name>.synth.json`                                          |
//! | `simulate` | `<name>.trace.csv`, `<name>.snapshot.t<time>.csv`            |
//! | `sweep`    | `<name>.sweep.L<Λ>.q<q>.nx<nx>.csv`, `<name>.sweep.csv`      |
//! | `verify`   | `verify.<suite>.txt`, `verify.<suite>.json`                  |
//!
//! Exit status is 0 when every verdict passes, 1 when one fails and 2 for
//! usage or input errors.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hypstab_core::suite::SuiteSelection;

#[derive(Parser)]
#[command(name = "hypstab", version, about = "Finite-time boundary stabilization of 1-D hyperbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the feedback maps, transit times and T_opt of a scenario.
    Synth { scenario: PathBuf },
    /// Run the closed loop and write the trace (and snapshots) as CSV.
    Simulate {
        scenario: PathBuf,
        /// Snapshot times, overriding `numerics.snapshots`.
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Run the built-in acceptance suite and write a report.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Decay checks over the grid of (Λ, q, nx), one trace per cell.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        nx: Option<Vec<usize>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Linear,
    Nonlinear,
    All,
}

impl From<Suite> for SuiteSelection {
    fn from(s: Suite) -> Self {
        match s {
            Suite::Linear => SuiteSelection::Linear,
            Suite::Nonlinear => SuiteSelection::Nonlinear,
            Suite::All => SuiteSelection::All,
        }
    }
}

/// How a command ended when it did not succeed.
pub enum Failure {
    /// A verdict failed; the message names the first one.
    Verdict(String),
    /// Bad input: unreadable or invalid scenario, unsupported combination.
    Usage(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { scenario } => commands::synth(&scenario),
        Command::Simulate { scenario, snapshots } => commands::simulate(&scenario, snapshots),
        Command::Verify { suite } => commands::verify(suite.into()),
        Command::Sweep {
            scenario,
            lambda,
            q,
            nx,
        } => commands::sweep(&scenario, lambda, q, nx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
