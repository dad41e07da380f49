//! `volredf`: realized EDF of spot variance and goodness-of-fit tests for
//! stochastic volatility models, from the command line.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod commands;
mod config;
mod experiment;
mod input;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{DesignArgs, ModelArgs, SpotArgs};

/// Exit codes. Usage errors exit with 2 (clap's convention).
pub mod exit {
    pub const IO: u8 = 3;
    pub const INPUT: u8 = 4;
    pub const CONFIG: u8 = 5;
    pub const NUMERICAL: u8 = 6;
    pub const PARTIAL: u8 = 7;
}

#[derive(Debug)]
pub enum CliError {
    Io { path: PathBuf, source: std::io::Error },
    Core(volredf::Error),
    Config(String),
    /// Some replications of an experiment failed; outputs were still written.
    Partial { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn code(&self) -> u8 {
        use volredf::Error as E;
        match self {
            CliError::Io { .. } | CliError::Core(E::Io(_)) => exit::IO,
            CliError::Core(E::Parse { .. } | E::Empty(_) | E::Csv(_) | E::InsufficientData(_) | E::LengthMismatch { .. }) => {
                exit::INPUT
            }
            CliError::Core(E::InvalidArgument(_) | E::Domain(_)) | CliError::Config(_) => exit::CONFIG,
            CliError::Core(E::NonConvergence { .. } | E::Replicate { .. }) => exit::NUMERICAL,
            CliError::Partial { .. } => exit::PARTIAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self.code() {
            exit::IO => "io",
            exit::INPUT => "input",
            exit::CONFIG => "config",
            exit::NUMERICAL => "numerical",
            _ => "partial_failure",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Partial { failed, total } => write!(f, "{failed} of {total} replications failed; see manifest.json"),
        }
    }
}

impl From<volredf::Error> for CliError {
    fn from(e: volredf::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "volredf", version, about = "Realized EDF of spot variance and goodness-of-fit tests for stochastic volatility models")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts without an explicit --output.
    #[arg(long, global = true, env = "VOLREDF_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NullArg {
    Gamma,
    Lognormal,
    Ig,
    Gig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatArg {
    Rks,
    Cvm,
    Ad,
}

impl StatArg {
    pub fn kind(self) -> volredf::gof::StatKind {
        match self {
            StatArg::Rks => volredf::gof::StatKind::Rks,
            StatArg::Cvm => volredf::gof::StatKind::Cvm,
            StatArg::Ad => volredf::gof::StatKind::Ad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BootstrapArg {
    /// Critical values from the model with the given parameters.
    Known,
    /// Parameters re-estimated in every replicate.
    Estimated,
    /// Statistic only.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, clap::Args)]
pub struct InputArgs {
    /// Grid CSV (day,i,log_price) or spot-variance CSV (day,i,v_hat,...).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Grid spacing in sessions; inferred from the longest day when absent.
    #[arg(long)]
    pub delta_n: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align raw ticks to an equidistant grid by previous-tick interpolation.
    Pretick {
        /// Tick CSV with header timestamp,price (optionally day,timestamp,price).
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        grid_seconds: f64,
        /// Session start, HH:MM[:SS] (used for ISO-8601 timestamps).
        #[arg(long, default_value = "09:30")]
        session_start: String,
        #[arg(long, default_value = "16:00")]
        session_end: String,
        /// Reject non-positive prices instead of dropping them.
        #[arg(long)]
        strict: bool,
        /// Drop outliers against a rolling median of this many ticks.
        #[arg(long)]
        clean_window: Option<usize>,
        #[arg(long, default_value_t = 10.0)]
        clean_sd: f64,
    },
    /// Simulate a noisy, jump-contaminated price panel.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Estimate the spot-variance path.
    Spotvol {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spot: SpotArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Realized EDF: quantiles, CDF on a grid, long-run variance.
    Redf {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spot: SpotArgs,
        /// Quantile levels, start:stop:step or a comma list.
        #[arg(long)]
        quantiles: Option<String>,
        /// Points x for F(x), start:stop:step or a comma list.
        #[arg(long)]
        grid: Option<String>,
        /// Add the long-run variance Σ̂(x) with lag window T^xi.
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Goodness-of-fit test of a stationary variance law.
    Gof {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        spot: SpotArgs,
        #[arg(long, value_enum)]
        null: NullArg,
        #[arg(long, value_enum, default_value_t = StatArg::Rks)]
        stat: StatArg,
        #[arg(long, value_enum, default_value_t = BootstrapArg::Known)]
        bootstrap: BootstrapArg,
        /// Bootstrap replicates.
        #[arg(short = 'B', long = "replicates", default_value_t = 200)]
        b: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        model: ModelArgs,
        /// GIG parameters a,b,p (the gig null has no simulation model).
        #[arg(long, value_delimiter = ',')]
        gig: Option<Vec<f64>>,
        /// Noise s.d. for estimated-parameter replicates (default √median ω̂²).
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Fit a variance model to daily integrated variance by GMM.
    Calibrate {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "heston")]
        family: String,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run a desk-scale Monte Carlo experiment.
    Experiment {
        /// redf-accuracy, clt-pivot, size-power or empirical.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(short = 'B', long = "replicates")]
        b: Option<usize>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        spot: SpotArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Grid CSV for the empirical experiment.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "schema": output::SCHEMA,
                "error": { "kind": e.kind(), "code": e.code(), "message": e.to_string() }
            });
            eprintln!("{body}");
            ExitCode::from(e.code())
        }
    }
}
