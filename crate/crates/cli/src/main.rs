//! `surveyml`: simulation, estimation, imputation, bootstrap and diagnostics.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 quality-gate
//! breach (too many failed replications).

mod commands;
mod data;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "surveyml", version, about = "Design-based survey estimation with ML nuisance fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SURVEYML_THREADS")]
    pub threads: Option<usize>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a Monte Carlo scenario and write metrics.csv and manifest.cfg.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the mean from a sample file, one row per configured estimator.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Sample CSV (`id,weight,x1..xp,y[,respondent]`); overrides `data`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the completed data file of the cross-fitted AIPW estimator.
    Impute {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pseudo-population bootstrap variance of an IPW estimate.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Replicate CSV (`b,estimate`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the Gateaux-derivative table of the four estimating equations.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Optional CSV copy of the table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { common, out } => commands::simulate(&common, &out),
        Command::Estimate { common, data, out } => commands::estimate(&common, data.as_deref(), &out),
        Command::Impute { common, data, out } => commands::impute(&common, data.as_deref(), &out),
        Command::Bootstrap { common, data, out } => commands::bootstrap(&common, data.as_deref(), &out),
        Command::Diagnose { common, out } => commands::diagnose(&common, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
