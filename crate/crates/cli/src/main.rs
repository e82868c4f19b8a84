use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qpp_dbm_cli::pipeline::{Command, RunError};
use qpp_dbm_cli::plot::{emit_plot_data, Quantity};
use qpp_dbm_cli::{run_command, Overrides};

/// Bright/dark-mode reduction of emitters coupled to an absorbing nanostructure.
///
/// Exit codes: 0 success, 1 I/O failure, 2 invalid config or missing plot
/// quantity, 3 numerical failure, 4 identity verification failure.
#[derive(Debug, Parser)]
#[command(name = "qpp-dbm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario config (JSON)
    #[arg(long, global = true, env = "QPP_DBM_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.directory`
    #[arg(long, global = true, env = "QPP_DBM_OUT")]
    out: Option<PathBuf>,

    /// Tolerance profile for `verify`: reference, strict or relaxed
    #[arg(long, global = true, env = "QPP_DBM_TOLERANCE_PROFILE")]
    tolerance_profile: Option<String>,

    /// Seed for random probe points; overrides `seed`
    #[arg(long, global = true, env = "QPP_DBM_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Green-tensor tables at emitter and random probe points
    Greens,
    /// Coupling table g^e, g^m and the Omega profiles
    Couplings,
    /// Overlap matrices, Löwdin basis and chi couplings
    Dbm,
    /// Single-excitation propagation and model comparison
    Dynamics,
    /// Identity suite; exits 4 if any check fails
    Verify,
    /// Every stage in sequence
    All,
    /// Delimited plot files from an existing bundle
    Plot {
        /// Bundle directory (defaults to --out)
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long, value_enum)]
        quantity: Quantity,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("QPP_DBM_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    let command = match cli.command {
        Cmd::Plot { bundle, quantity } => {
            let dir = bundle.or(cli.out).ok_or_else(|| RunError::config("--bundle", "no bundle directory given"))?;
            for p in emit_plot_data(&dir, quantity)? {
                println!("{}", p.display());
            }
            return Ok(());
        }
        Cmd::Greens => Command::Greens,
        Cmd::Couplings => Command::Couplings,
        Cmd::Dbm => Command::Dbm,
        Cmd::Dynamics => Command::Dynamics,
        Cmd::Verify => Command::Verify,
        Cmd::All => Command::All,
    };
    let config = cli.config.ok_or_else(|| RunError::config("--config", "a scenario config is required"))?;
    let overrides = Overrides { out: cli.out, tolerance_profile: cli.tolerance_profile, seed: cli.seed };
    let dir = run_command(command, &config, &overrides)?;
    println!("{}", dir.display());
    Ok(())
}
