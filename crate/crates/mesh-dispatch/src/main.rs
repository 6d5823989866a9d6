//! Command-line front end. Parses the subcommand and flags, configures the
//! worker pool from `MESH_DISPATCH_THREADS` when set, and maps command
//! outcomes to exit codes (0 success, 1 error, 2 incomplete).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use mesh_dispatch::commands::{self, Overrides};

#[derive(Parser)]
#[command(
    name = "mesh-dispatch",
    version,
    about = "Decentralized economic dispatch and demand response for multi-energy hubs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the decentralized iteration and write the per-round trace.
    Run(CommonArgs),
    /// Solve the centralized reference problem and write the allocation.
    Oracle(CommonArgs),
    /// Repeat the run across penalty values and summarize the results.
    SweepRho(SweepArgs),
    /// Evaluate the contraction certificate of the communication graph.
    Certificate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON configuration file.
    #[arg(long, value_name = "path")]
    config: PathBuf,
    /// Output directory (overrides the configuration).
    #[arg(long, value_name = "dir")]
    out: Option<PathBuf>,
    /// Seed for the initial decision draw (overrides the configuration).
    #[arg(long, value_name = "int")]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated penalty values (default: 0.01,0.1,1,5).
    #[arg(long, value_name = "list", value_delimiter = ',', num_args = 1..)]
    rho: Option<Vec<f64>>,
}

impl CommonArgs {
    fn overrides(&self, rho_list: Option<Vec<f64>>) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            rho_list,
        }
    }
}

/// Caps the worker pool at `MESH_DISPATCH_THREADS` when the variable is
/// set; an absent variable leaves the default (one worker per core).
fn configure_threads() -> Result<(), String> {
    let raw = match std::env::var("MESH_DISPATCH_THREADS") {
        Ok(raw) => raw,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(err) => return Err(format!("MESH_DISPATCH_THREADS: {err}")),
    };
    let threads: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or(format!(
        "MESH_DISPATCH_THREADS must be a positive integer, got {raw:?}"
    ))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|err| format!("cannot configure the worker pool: {err}"))
}

fn main() -> ExitCode {
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(commands::EXIT_FAILURE as u8);
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => commands::EXIT_SUCCESS,
                _ => commands::EXIT_FAILURE,
            };
            let _ = err.print();
            return ExitCode::from(code as u8);
        }
    };

    let code = match cli.command {
        Command::Run(args) => commands::cmd_run(&args.config, &args.overrides(None)),
        Command::Oracle(args) => commands::cmd_oracle(&args.config, &args.overrides(None)),
        Command::SweepRho(args) => {
            let rho = args.rho;
            commands::cmd_sweep_rho(&args.common.config, &args.common.overrides(rho))
        }
        Command::Certificate(args) => {
            commands::cmd_certificate(&args.config, &args.overrides(None))
        }
    };
    ExitCode::from(code as u8)
}
