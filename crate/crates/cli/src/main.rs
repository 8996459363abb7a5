//! `causalcert` command-line front end.

mod commands;
mod target;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::target::TargetArgs;

#[derive(Debug, Parser)]
#[command(name = "causalcert", version, about = "Certify causal nonseparability from process matrices, D-POVMs and assemblages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the built-in scenarios.
    List(OutputArgs),
    /// Check the validity of a scenario's or file's ingredients.
    Validate {
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compute the robustness of one object and its witness.
    Certify {
        #[command(flatten)]
        target: TargetArgs,
        /// Weight of the white-noise admixture: (E + r·N)/(1 + r).
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Bisect the noise level at which certification stops.
    Scan {
        #[command(flatten)]
        target: TargetArgs,
        /// Lower end of the bracket (must certify); defaults per scenario.
        #[arg(long)]
        lo: Option<f64>,
        /// Upper end of the bracket (must not certify).
        #[arg(long)]
        hi: Option<f64>,
        /// Final bracket width.
        #[arg(long, default_value_t = 1e-3)]
        width: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Scan every built-in scenario and compare with the reference thresholds.
    Reproduce {
        /// Restrict to these scenarios (repeatable).
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Check a witness file against a target's cone and noise.
    WitnessVerify {
        /// Witness JSON as written by `certify --out`.
        witness: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        /// Noise weight of the object the witness is applied to.
        #[arg(long, default_value_t = 0.0)]
        r: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Solver feasibility tolerance.
    #[arg(long, env = "CAUSALCERT_SOLVER_TOL")]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Print the JSON report instead of text.
    #[arg(long)]
    json: bool,
    /// Directory for JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
