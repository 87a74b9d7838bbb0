use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;

/// Environment variable capping worker threads.
const THREADS_VAR: &str = "EXPFRAME_THREADS";

#[derive(Parser)]
#[command(name = "expframe")]
#[command(about = "Construct and certify exponential frames for grid-approximable spectra")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cover a spectrum by grid cells, select rows, and certify the frame
    Construct {
        #[command(flatten)]
        io: IoArgs,
        /// Grid order; searched by doubling from 64 when omitted
        #[arg(long)]
        m: Option<usize>,
        /// Window scale d; defaults to max(1, (sup − inf)/2π)
        #[arg(long)]
        d: Option<f64>,
        /// Allowed cover excess as a fraction of the spectrum measure
        #[arg(long, default_value_t = 0.01)]
        epsilon_cover: f64,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Certificate for a given grid spectrum and row set
    Certify {
        #[command(flatten)]
        io: IoArgs,
        /// Row set J; overrides any "J" in the input
        #[arg(long = "J", value_delimiter = ',')]
        rows: Option<Vec<usize>>,
    },
    /// Monte-Carlo, Rayleigh and witness checks of a construction
    Verify {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        verification: VerificationArgs,
    },
    /// Window counts, Landau floor and the η-window count bound
    Density {
        #[command(flatten)]
        io: IoArgs,
        /// Window length; defaults to 10 periods m/d
        #[arg(long)]
        window: Option<f64>,
        /// Scan range as x0,x1; defaults to 20 windows from 0
        #[arg(long, value_delimiter = ',', num_args = 2)]
        scan: Option<Vec<f64>>,
    },
    /// Halving schedule table for a given δ
    Schedule {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Args, Clone)]
struct IoArgs {
    /// Input JSON file, or inline JSON starting with '{'
    #[arg(long)]
    input: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Clone, Serialize)]
struct SelectionArgs {
    /// exhaustive | random_certified | greedy_swap
    #[arg(long, default_value = "random_certified")]
    method: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_attempts: usize,
    #[arg(long, default_value_t = 0.05)]
    slack: f64,
}

#[derive(Args, Clone, Serialize)]
struct VerificationArgs {
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Trigonometric order per cell
    #[arg(long = "K", default_value_t = 4)]
    order: usize,
    /// Truncation radius; defaults to 50·m/d
    #[arg(long = "R")]
    radius: Option<f64>,
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

fn configure_threads() -> Result<(), commands::CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| commands::CliError::Input(format!("{THREADS_VAR}={raw:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| commands::CliError::Input(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(commands::Outcome::Pass) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("expframe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
