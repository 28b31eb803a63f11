use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use signum_consensus::cli::{
    cmd_filippov_check, cmd_matrix, cmd_reproduce, cmd_simulate, cmd_spectrum, GlobalOpts,
};

/// Simulator and analysis toolkit for finite-time consensus protocols with
/// signum-based control laws.
#[derive(Parser)]
#[command(name = "signum-consensus", version, about)]
struct Cli {
    /// Output directory (overrides config `outputs` and SIGNUM_CONSENSUS_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for random initial states.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario config; writes trajectory.csv, events.json, report.json.
    Simulate { config: PathBuf },
    /// Run a bundled reproduction scenario with self-checks.
    Reproduce {
        /// One of: example1, example2-finite, example2-asymptotic.
        name: String,
    },
    /// Run the finite-time-iff matrix and write a CSV summary.
    Matrix { config: PathBuf },
    /// Print Laplacian eigenvalues, lambda_2 and the convergence-time bound.
    Spectrum { config: PathBuf },
    /// Set-membership checks of the Filippov field map.
    #[command(name = "filippov-check")]
    FilippovCheck { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOpts {
        out: cli.out,
        seed: cli.seed,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Simulate { config } => cmd_simulate(&config, &opts),
        Command::Reproduce { name } => cmd_reproduce(&name, &opts),
        Command::Matrix { config } => cmd_matrix(&config, &opts),
        Command::Spectrum { config } => cmd_spectrum(&config, &opts),
        Command::FilippovCheck { config } => cmd_filippov_check(&config, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
