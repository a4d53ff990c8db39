//! Command-line front end: analytic tables, single simulation runs,
//! mode-comparison sweeps, and optimal-depth scans, all emitted as CSV.
//!
//! Exit codes: 0 success, 2 config read/parse error, 3 validation error,
//! 4 runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loopmux::commands::{
    cmd_analytic, cmd_optimal_m, cmd_simulate, cmd_sweep, resolve_loss,
};
use loopmux::config::{RunConfigFile, SweepFile, DEFAULT_REP_RATE_HZ};
use loopmux::error::Result;

#[derive(Parser)]
#[command(
    name = "loopmux",
    version,
    about = "Temporal loop multiplexing of heralded single photons: model and Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form performance table over multiplexing depths
    Analytic {
        /// Single-pulse heralded delivery probability
        #[arg(long)]
        p1: f64,
        /// Loop pass efficiency in (0, 1]
        #[arg(long, conflicts_with = "loss_db")]
        eta_loop: Option<f64>,
        /// Loop pass loss in dB (default 1.0 when neither flag is given)
        #[arg(long)]
        loss_db: Option<f64>,
        /// Largest depth to tabulate
        #[arg(long, default_value_t = 20)]
        m_max: u32,
        /// Number of simultaneous sources for the speedup column
        #[arg(long, default_value_t = 10)]
        n_sources: u32,
        /// Pump repetition rate in Hz
        #[arg(long, default_value_t = DEFAULT_REP_RATE_HZ)]
        rep_rate: f64,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run from a TOML config
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed in the config file
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel replicas (results are per seed+workers pair)
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired multiplexed/simplex runs over a parameter grid
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal multiplexing depth as a function of source count
    OptimalM {
        #[arg(long)]
        p1: f64,
        #[arg(long, conflicts_with = "loss_db")]
        eta_loop: Option<f64>,
        #[arg(long)]
        loss_db: Option<f64>,
        #[arg(long, default_value_t = 40)]
        n_max: u32,
        #[arg(long, default_value_t = 20)]
        m_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(csv: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analytic {
            p1,
            eta_loop,
            loss_db,
            m_max,
            n_sources,
            rep_rate,
            out,
        } => {
            let eta = resolve_loss(eta_loop, loss_db)?;
            let csv = cmd_analytic(p1, eta, m_max, n_sources, rep_rate)?;
            emit(&csv, out.as_ref())
        }
        Command::Simulate {
            config,
            seed,
            workers,
            out,
        } => {
            let file = RunConfigFile::load(&config)?;
            let mut resolved = file.resolve()?;
            if let Some(seed) = seed {
                resolved.sim.seed = seed;
            }
            let output = cmd_simulate(&resolved, workers)?;
            eprint!("{}", output.summary);
            emit(&output.csv, out.as_ref())
        }
        Command::Sweep {
            config,
            seed,
            workers,
            out,
        } => {
            let file = SweepFile::load(&config)?;
            let mut resolved = file.resolve()?;
            if let Some(seed) = seed {
                resolved.base.sim.seed = seed;
            }
            let csv = cmd_sweep(&resolved, workers)?;
            emit(&csv, out.as_ref())
        }
        Command::OptimalM {
            p1,
            eta_loop,
            loss_db,
            n_max,
            m_max,
            out,
        } => {
            let eta = resolve_loss(eta_loop, loss_db)?;
            let csv = cmd_optimal_m(p1, eta, n_max, m_max)?;
            emit(&csv, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
