//! TOML configuration file and its merge with command-line flags.
//!
//! Every section is optional; flags override file values, which override
//! the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volredf::calib::GmmOptions;
use volredf::sim::{JumpSpec, NoiseSpec, SvModelSpec};
use volredf::spotvol::{BlockRule, SpotConfig};

use crate::CliError;

/// Session length in hours used to turn `block_hours` into a fraction.
pub const SESSION_HOURS: f64 = 6.5;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<SvModelSpec>,
    /// Data-generating model of the power study.
    pub alt_model: Option<SvModelSpec>,
    pub jumps: Option<JumpSection>,
    pub noise: Option<NoiseSpec>,
    pub grid: Option<GridSection>,
    pub spot: Option<SpotSection>,
    pub bootstrap: Option<BootstrapSection>,
    pub calib: Option<CalibSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    pub lambda: Option<f64>,
    pub r: Option<f64>,
    /// Intensity; when absent it is calibrated from `share`.
    pub c: Option<f64>,
    /// Share of total quadratic variation carried by jumps; 0 disables them.
    pub share: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub days: Option<usize>,
    pub fine_steps: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotSection {
    pub theta: Option<f64>,
    pub trunc_alpha: Option<f64>,
    pub omega_bar: Option<f64>,
    pub block_hours: Option<f64>,
    pub block_n: Option<usize>,
    pub truncate: Option<bool>,
    pub diurnal: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub b: Option<usize>,
    pub days: Option<usize>,
    pub steps_per_day: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibSection {
    pub restarts: Option<usize>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<String>,
    pub replications: Option<usize>,
    pub trials: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub procedures: Option<Vec<String>>,
    pub input: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn spot(&self) -> SpotSection {
        self.spot.clone().unwrap_or_default()
    }

    pub fn grid(&self) -> GridSection {
        self.grid.clone().unwrap_or_default()
    }

    pub fn bootstrap(&self) -> BootstrapSection {
        self.bootstrap.clone().unwrap_or_default()
    }

    pub fn experiment(&self) -> ExperimentSection {
        self.experiment.clone().unwrap_or_default()
    }

    pub fn gmm_options(&self, seed: u64) -> GmmOptions {
        let c = self.calib.clone().unwrap_or_default();
        let d = GmmOptions::default();
        GmmOptions { restarts: c.restarts.unwrap_or(d.restarts), max_iter: c.max_iter.unwrap_or(d.max_iter), seed, ..d }
    }
}

/// Spot estimation flags shared by several subcommands.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SpotArgs {
    /// Pre-averaging window constant θ (k_n = ⌊θ/√Δ⌋).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Truncation quantile level α (threshold uses the 1−α normal quantile).
    #[arg(long)]
    pub trunc_alpha: Option<f64>,
    /// Truncation rate exponent ω̄.
    #[arg(long)]
    pub omega_bar: Option<f64>,
    /// Block length in hours of a 6.5 hour session.
    #[arg(long, conflicts_with = "block_n")]
    pub block_hours: Option<f64>,
    /// Block length in grid points.
    #[arg(long)]
    pub block_n: Option<usize>,
    /// Keep every pre-averaged return (no jump truncation).
    #[arg(long)]
    pub no_truncate: bool,
    /// Apply the time-of-day correction.
    #[arg(long)]
    pub diurnal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpotSettings {
    pub config: SpotConfig,
    pub diurnal: bool,
}

pub fn resolve_spot(args: &SpotArgs, file: &FileConfig) -> Result<SpotSettings, CliError> {
    let s = file.spot();
    let d = SpotConfig::default();
    let block = match (args.block_n.or(s.block_n), args.block_hours.or(s.block_hours)) {
        (Some(h_n), _) => BlockRule::Explicit { h_n },
        (None, Some(hours)) => BlockRule::ClockSpan { fraction: hours / SESSION_HOURS },
        (None, None) => d.block,
    };
    let config = SpotConfig {
        theta: args.theta.or(s.theta).unwrap_or(d.theta),
        trunc_alpha: args.trunc_alpha.or(s.trunc_alpha).unwrap_or(d.trunc_alpha),
        omega_bar: args.omega_bar.or(s.omega_bar).unwrap_or(d.omega_bar),
        block,
        truncate: !(args.no_truncate || s.truncate == Some(false)),
    };
    if !(config.theta > 0.0) || !(config.trunc_alpha > 0.0 && config.trunc_alpha < 1.0) || !(config.omega_bar >= 0.0) {
        return Err(CliError::Config("theta > 0, trunc_alpha in (0, 1) and omega_bar >= 0 are required".into()));
    }
    Ok(SpotSettings { config, diurnal: args.diurnal || s.diurnal.unwrap_or(false) })
}

/// Model family flags and parameter overrides.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ModelArgs {
    /// Variance model family: heston, expou or tsou.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Heston mean level, or the mean of ln V for expou.
    #[arg(long)]
    pub v0: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// TS-OU intensity c.
    #[arg(long)]
    pub c: Option<f64>,
    /// TS-OU tempering λ.
    #[arg(long)]
    pub lambda: Option<f64>,
}

pub fn default_model(family: &str) -> Result<SvModelSpec, CliError> {
    match family.to_ascii_lowercase().as_str() {
        "heston" => Ok(SvModelSpec::heston_default()),
        "expou" => Ok(SvModelSpec::expou_default()),
        "tsou" => Ok(SvModelSpec::Tsou { kappa: 0.05, c: 1.0, lambda: std::f64::consts::PI, beta: 0.5 }),
        other => Err(CliError::Config(format!("unknown model family '{other}'"))),
    }
}

/// Model from flags over `base` (the file's model or the Heston default).
pub fn resolve_model(args: &ModelArgs, base: Option<SvModelSpec>) -> Result<SvModelSpec, CliError> {
    let mut spec = match (&args.model, base) {
        (Some(f), Some(b)) if b.family() == f.to_ascii_lowercase() => b,
        (Some(f), _) => default_model(f)?,
        (None, Some(b)) => b,
        (None, None) => SvModelSpec::heston_default(),
    };
    match &mut spec {
        SvModelSpec::Heston { kappa, v0, xi, rho } | SvModelSpec::Expou { kappa, v0, xi, rho } => {
            set(kappa, args.kappa);
            set(v0, args.v0);
            set(xi, args.xi);
            set(rho, args.rho);
            if args.c.is_some() || args.lambda.is_some() {
                return Err(CliError::Config("--c and --lambda apply to the tsou family only".into()));
            }
        }
        SvModelSpec::Tsou { kappa, c, lambda, .. } => {
            set(kappa, args.kappa);
            set(c, args.c);
            set(lambda, args.lambda);
            if args.v0.is_some() || args.xi.is_some() || args.rho.is_some() {
                return Err(CliError::Config("--v0, --xi and --rho do not apply to the tsou family".into()));
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn set(slot: &mut f64, v: Option<f64>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Simulation design flags.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct DesignArgs {
    /// Number of days T.
    #[arg(long)]
    pub days: Option<usize>,
    /// Observations per day n.
    #[arg(long)]
    pub n: Option<usize>,
    /// Euler steps per day for the efficient price.
    #[arg(long)]
    pub fine_steps: Option<usize>,
    /// Noise-to-signal ratio γ.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Share of quadratic variation from jumps (0 disables jumps).
    #[arg(long)]
    pub jump_share: Option<f64>,
    #[arg(long)]
    pub jump_lambda: Option<f64>,
    /// Jump activity index r in [0, 2).
    #[arg(long)]
    pub jump_r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Design {
    pub days: usize,
    pub n: usize,
    pub fine_steps: usize,
    pub noise: NoiseSpec,
    pub jumps: Option<JumpSpec>,
}

/// Grid, noise and jumps. Jumps are calibrated against `model`'s mean variance.
pub fn resolve_design(args: &DesignArgs, file: &FileConfig, model: &SvModelSpec, default_days: usize) -> Result<Design, CliError> {
    let g = file.grid();
    let days = args.days.or(g.days).unwrap_or(default_days);
    let n = args.n.or(g.n).unwrap_or(2340);
    let fine_steps = args.fine_steps.or(g.fine_steps).unwrap_or(23400);
    if days == 0 || n == 0 || fine_steps == 0 || !fine_steps.is_multiple_of(n) {
        return Err(CliError::Config(format!("need days, n > 0 and n dividing fine_steps (got {days}, {n}, {fine_steps})")));
    }
    let gamma = args.gamma.or(file.noise.map(|s| s.gamma)).unwrap_or(0.5);
    if !(gamma >= 0.0) {
        return Err(CliError::Config("gamma must be nonnegative".into()));
    }
    let j = file.jumps.clone().unwrap_or_default();
    let lambda = args.jump_lambda.or(j.lambda).unwrap_or(3.0);
    let r = args.jump_r.or(j.r).unwrap_or(0.5);
    let jumps = match (args.jump_share, j.c, j.share) {
        (Some(share), _, _) | (None, None, Some(share)) => {
            if share == 0.0 {
                None
            } else {
                Some(JumpSpec::from_share(lambda, r, share, model.mean_variance())?)
            }
        }
        (None, Some(c), _) => {
            let spec = JumpSpec { c, lambda, r };
            spec.validate()?;
            Some(spec)
        }
        (None, None, None) => Some(JumpSpec::from_share(lambda, r, 0.2, model.mean_variance())?),
    };
    Ok(Design { days, n, fine_steps, noise: NoiseSpec { gamma }, jumps })
}
