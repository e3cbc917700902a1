//! `wvamp`: lifetime tables, PDF curves, pseudo-experiments, fits and
//! uncertainty scans for weak-value amplification in neutral B decays.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, RESOLVED_NAME};
use crate::error::CliError;

#[derive(Parser)]
#[command(version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; built-in defaults when absent
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides run.seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory; overrides io.out_dir
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Effective lifetime over an (|r|, theta) grid
    Lifetime,
    /// Tabulated signal, background and observable densities
    Pdf,
    /// Pseudo-experiment datasets
    Generate,
    /// Unbinned fit of phi to a dataset
    Fit {
        /// Dataset to fit (.bin for binary, otherwise CSV); overrides io.data
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Pseudo-experiment ensemble at the configured point
    Ensemble,
    /// Ensembles over the (|r|, theta) scan grid
    Scan,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.io.out_dir = out;
    }
    if let Command::Fit { data: Some(data) } = &cli.command {
        cfg.io.data = Some(data.clone());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }

    let out = cfg.io.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::from(e).context(out.display()))?;
    std::fs::write(out.join(RESOLVED_NAME), cfg.to_toml())?;

    match cli.command {
        Command::Lifetime => commands::lifetime(&cfg, &out),
        Command::Pdf => commands::pdf(&cfg, &out),
        Command::Generate => commands::generate(&cfg, &out),
        Command::Fit { .. } => commands::fit(&cfg, &out),
        Command::Ensemble => commands::ensemble(&cfg, &out),
        Command::Scan => commands::scan_grid(&cfg, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
