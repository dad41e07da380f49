//! Simulation of stochastic-volatility price paths with jumps and noise.
//!
//! Time is measured in trading days. A path over `days` days on a grid of
//! `steps_per_day` points has `days·steps_per_day + 1` points, with day `d`
//! spanning points `d·steps_per_day ..= (d+1)·steps_per_day`.

pub mod cir;
pub mod levy;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::gof::{ig_from_ts, NullMarginal};
use crate::marketdata::{log_returns, ReturnSeries, TickSeries};
use crate::redf::Redf;
use crate::rng::{normal, substream, StreamRng};
use crate::{Error, Result};

pub use cir::Cir;
pub use levy::{SymmetricTs, TsOuInnovation};

const STREAM_VOL: u64 = 1;
const STREAM_JUMP: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SvModelSpec {
    /// `dV = κ(v₀ − V)dt + ξ√V dB`, `corr(dW, dB) = ρ`.
    Heston { kappa: f64, v0: f64, xi: f64, rho: f64 },
    /// `d ln V = κ(v₀ − ln V)dt + ξ dB`, `corr(dW, dB) = ρ`.
    Expou { kappa: f64, v0: f64, xi: f64, rho: f64 },
    /// `dV = −κV dt + dL` with TS(c, λ, β) stationary law; only β = 1/2
    /// is supported. The price has no leverage.
    Tsou { kappa: f64, c: f64, lambda: f64, beta: f64 },
}

impl SvModelSpec {
    pub fn heston_default() -> Self {
        SvModelSpec::Heston { kappa: 0.05, v0: 1.0, xi: 0.2, rho: -(0.5f64.sqrt()) }
    }

    pub fn expou_default() -> Self {
        SvModelSpec::Expou { kappa: 0.08, v0: -0.3, xi: 0.45, rho: -(0.5f64.sqrt()) }
    }

    pub fn family(&self) -> &'static str {
        match self {
            SvModelSpec::Heston { .. } => "heston",
            SvModelSpec::Expou { .. } => "expou",
            SvModelSpec::Tsou { .. } => "tsou",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SvModelSpec::Heston { kappa, v0, xi, rho } => kappa > 0.0 && v0 > 0.0 && xi >= 0.0 && rho.abs() <= 1.0,
            SvModelSpec::Expou { kappa, v0, xi, rho } => kappa > 0.0 && v0.is_finite() && xi >= 0.0 && rho.abs() <= 1.0,
            SvModelSpec::Tsou { kappa, c, lambda, beta } => {
                if beta != 0.5 {
                    return Err(Error::invalid("tsou supports beta = 0.5 only"));
                }
                kappa > 0.0 && c > 0.0 && lambda > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid {} parameters", self.family())))
        }
    }

    /// Whether `2κv₀ ≥ ξ²`; `None` for families without the condition.
    pub fn feller(&self) -> Option<bool> {
        match *self {
            SvModelSpec::Heston { kappa, v0, xi, .. } => Some(2.0 * kappa * v0 >= xi * xi),
            _ => None,
        }
    }

    /// Stationary law of `V`.
    pub fn stationary_marginal(&self) -> Result<NullMarginal> {
        self.validate()?;
        let m = match *self {
            SvModelSpec::Heston { kappa, v0, xi, .. } => {
                if xi == 0.0 {
                    return Err(Error::domain("xi = 0 has a degenerate stationary law"));
                }
                let rate = 2.0 * kappa / (xi * xi);
                NullMarginal::Gamma { shape: rate * v0, rate }
            }
            SvModelSpec::Expou { kappa, v0, xi, .. } => {
                if xi == 0.0 {
                    return Err(Error::domain("xi = 0 has a degenerate stationary law"));
                }
                NullMarginal::Lognormal { mu: v0, sigma2: xi * xi / (2.0 * kappa) }
            }
            SvModelSpec::Tsou { c, lambda, .. } => {
                let (mu, nu) = ig_from_ts(c, lambda)?;
                NullMarginal::InverseGaussian { mu, nu }
            }
        };
        Ok(m)
    }

    /// Stationary mean of `V`.
    pub fn mean_variance(&self) -> f64 {
        match *self {
            SvModelSpec::Heston { v0, .. } => v0,
            SvModelSpec::Expou { kappa, v0, xi, .. } => (v0 + xi * xi / (4.0 * kappa)).exp(),
            SvModelSpec::Tsou { c, lambda, .. } => c * (std::f64::consts::PI / lambda).sqrt(),
        }
    }
}

/// Symmetric tempered stable price jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub c: f64,
    pub lambda: f64,
    pub r: f64,
}

impl JumpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.c > 0.0 && self.lambda > 0.0 && (0.0..2.0).contains(&self.r) {
            Ok(())
        } else {
            Err(Error::domain("jumps need c > 0, lambda > 0 and r in [0, 2)"))
        }
    }

    /// Intensity `c` such that jumps carry `share` of total quadratic
    /// variation when the diffusive part contributes `mean_variance` per day.
    pub fn from_share(lambda: f64, r: f64, share: f64, mean_variance: f64) -> Result<Self> {
        if !(share > 0.0 && share < 1.0) {
            return Err(Error::domain("jump share must lie in (0, 1)"));
        }
        if !(mean_variance > 0.0) {
            return Err(Error::domain("mean variance must be positive"));
        }
        let unit = JumpSpec { c: 1.0, lambda, r };
        unit.validate()?;
        let c = share / (1.0 - share) * mean_variance / unit.qv_rate();
        Ok(JumpSpec { c, lambda, r })
    }

    /// Jump quadratic variation per day, `∫x²ν(dx)` over both sides.
    pub fn qv_rate(&self) -> f64 {
        2.0 * self.c * gamma(2.0 - self.r) * self.lambda.powf(self.r - 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise-to-signal ratio: `ω² = γ²·Δ·V`.
    pub gamma: f64,
}

/// Starting value of the variance process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Initial {
    /// Drawn from the stationary law.
    Stationary,
    Fixed(f64),
}

/// Step-by-step generator of `(V, dX)` on a uniform grid.
pub struct SvEngine {
    spec: SvModelSpec,
    dt: f64,
    /// Heston: the untruncated Euler state. Exp-OU: ln V. TS-OU: V.
    state: f64,
    rng: StreamRng,
    ar: f64,
    ar_sd: f64,
    innovation: Option<TsOuInnovation>,
}

impl SvEngine {
    pub fn new(spec: SvModelSpec, init: Initial, steps_per_day: usize, mut rng: StreamRng) -> Result<Self> {
        spec.validate()?;
        if steps_per_day == 0 {
            return Err(Error::invalid("steps_per_day must be positive"));
        }
        let dt = 1.0 / steps_per_day as f64;
        let v_start = match init {
            Initial::Fixed(v) if v > 0.0 => v,
            Initial::Fixed(_) => return Err(Error::domain("initial variance must be positive")),
            Initial::Stationary => match spec {
                SvModelSpec::Heston { xi, v0, .. } if xi == 0.0 => v0,
                SvModelSpec::Expou { xi, v0, .. } if xi == 0.0 => v0.exp(),
                _ => spec.stationary_marginal()?.sample(&mut rng),
            },
        };
        let (state, ar, ar_sd, innovation) = match spec {
            SvModelSpec::Heston { .. } => (v_start, 0.0, 0.0, None),
            SvModelSpec::Expou { kappa, xi, .. } => {
                let a = (-kappa * dt).exp();
                (v_start.ln(), a, xi * (-(-2.0 * kappa * dt).exp_m1() / (2.0 * kappa)).sqrt(), None)
            }
            SvModelSpec::Tsou { kappa, c, lambda, .. } => {
                (v_start, 0.0, 0.0, Some(TsOuInnovation::new(kappa, c, lambda, dt)?))
            }
        };
        Ok(Self { spec, dt, state, rng, ar, ar_sd, innovation })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Current variance.
    pub fn variance(&self) -> f64 {
        match self.spec {
            SvModelSpec::Heston { .. } => self.state.max(0.0),
            SvModelSpec::Expou { .. } => self.state.exp(),
            SvModelSpec::Tsou { .. } => self.state,
        }
    }

    /// Advances one step; returns the diffusive log-price increment over it.
    pub fn step(&mut self) -> f64 {
        let dt = self.dt;
        match self.spec {
            SvModelSpec::Heston { kappa, v0, xi, rho } => {
                let vp = self.state.max(0.0);
                let sd = (vp * dt).sqrt();
                let zb = normal(&mut self.rng);
                let zw = normal(&mut self.rng);
                self.state += kappa * (v0 - vp) * dt + xi * sd * zb;
                sd * (rho * zb + (1.0 - rho * rho).sqrt() * zw)
            }
            SvModelSpec::Expou { v0, rho, .. } => {
                let sd = (self.state.exp() * dt).sqrt();
                let zb = normal(&mut self.rng);
                let zw = normal(&mut self.rng);
                self.state = v0 + (self.state - v0) * self.ar + self.ar_sd * zb;
                sd * (rho * zb + (1.0 - rho * rho).sqrt() * zw)
            }
            SvModelSpec::Tsou { .. } => {
                let sd = (self.state * dt).sqrt();
                let zw = normal(&mut self.rng);
                let inn = self.innovation.as_ref().expect("tsou engine has an innovation sampler");
                let eta = inn.sample(&mut self.rng);
                self.state = self.state * inn.decay + eta;
                sd * zw
            }
        }
    }
}

/// Variance and continuous log-price on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SvPath {
    pub steps_per_day: usize,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
}

impl SvPath {
    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_day as f64
    }
}

fn simulate_sv(spec: &SvModelSpec, days: usize, steps_per_day: usize, seed: u64) -> Result<SvPath> {
    let mut eng = SvEngine::new(*spec, Initial::Stationary, steps_per_day, substream(seed, &[STREAM_VOL]))?;
    let n = days * steps_per_day;
    let mut v = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    let mut level = 0.0;
    v.push(eng.variance());
    x.push(level);
    for _ in 0..n {
        level += eng.step();
        v.push(eng.variance());
        x.push(level);
    }
    Ok(SvPath { steps_per_day, v, x })
}

fn require_family(spec: &SvModelSpec, family: &str) -> Result<()> {
    if spec.family() == family {
        Ok(())
    } else {
        Err(Error::invalid(format!("expected a {family} spec, got {}", spec.family())))
    }
}

/// Euler scheme with full truncation; `V₀` from the stationary Gamma law.
pub fn simulate_heston(spec: &SvModelSpec, days: usize, steps_per_day: usize, seed: u64) -> Result<SvPath> {
    require_family(spec, "heston")?;
    simulate_sv(spec, days, steps_per_day, seed)
}

/// Exact Gaussian AR(1) transition of `ln V`, stationary start.
pub fn simulate_expou(spec: &SvModelSpec, days: usize, steps_per_day: usize, seed: u64) -> Result<SvPath> {
    require_family(spec, "expou")?;
    simulate_sv(spec, days, steps_per_day, seed)
}

/// Exact transition preserving the inverse Gaussian stationary law.
pub fn simulate_tsou(spec: &SvModelSpec, days: usize, steps_per_day: usize, seed: u64) -> Result<SvPath> {
    require_family(spec, "tsou")?;
    simulate_sv(spec, days, steps_per_day, seed)
}

/// Cumulative symmetric TS jump path.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub steps_per_day: usize,
    pub j: Vec<f64>,
    /// Stable proposals drawn and accepted by the tempering step.
    pub proposals: u64,
    pub accepted: u64,
}

pub fn simulate_ts_jumps(jump: &JumpSpec, days: usize, steps_per_day: usize, seed: u64) -> Result<JumpPath> {
    jump.validate()?;
    if steps_per_day == 0 {
        return Err(Error::invalid("steps_per_day must be positive"));
    }
    let mut sampler = SymmetricTs::new(jump.c, jump.lambda, jump.r, 1.0 / steps_per_day as f64)?;
    let mut rng = substream(seed, &[STREAM_JUMP]);
    let n = days * steps_per_day;
    let mut j = Vec::with_capacity(n + 1);
    let mut level = 0.0;
    j.push(level);
    for _ in 0..n {
        level += sampler.sample(&mut rng);
        j.push(level);
    }
    Ok(JumpPath { steps_per_day, j, proposals: sampler.proposals, accepted: sampler.accepted })
}

/// `Z = X + U` with independent `U_i ~ N(0, γ²·Δ·V_i)`.
pub fn add_noise(x: &[f64], v: &[f64], delta_n: f64, noise: &NoiseSpec, seed: u64) -> Result<Vec<f64>> {
    if x.len() != v.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: v.len() });
    }
    if !(noise.gamma >= 0.0) {
        return Err(Error::domain("gamma must be nonnegative"));
    }
    if noise.gamma == 0.0 {
        return Ok(x.to_vec());
    }
    let mut rng = substream(seed, &[STREAM_NOISE]);
    let g2 = noise.gamma * noise.gamma * delta_n;
    Ok(x.iter()
        .zip(v)
        .map(|(&xi, &vi)| xi + (g2 * vi.max(0.0)).sqrt() * normal(&mut rng))
        .collect())
}

/// An end-to-end simulated data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub model: SvModelSpec,
    pub jump: Option<JumpSpec>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub days: usize,
    pub fine_steps: usize,
    pub coarse_n: usize,
    /// True variance on the fine grid.
    pub v_fine: Vec<f64>,
    /// True log-price (diffusion plus jumps) on the coarse grid.
    pub x: Vec<f64>,
    /// Observed log-price on the coarse grid.
    pub z: Vec<f64>,
}

pub fn assemble_panel(
    model: &SvModelSpec,
    jump: Option<&JumpSpec>,
    noise: &NoiseSpec,
    days: usize,
    fine_steps: usize,
    coarse_n: usize,
    seed: u64,
) -> Result<SimulatedPanel> {
    if days == 0 || coarse_n == 0 || fine_steps == 0 {
        return Err(Error::invalid("days and grid sizes must be positive"));
    }
    if !fine_steps.is_multiple_of(coarse_n) {
        return Err(Error::invalid(format!("coarse_n = {coarse_n} does not divide fine_steps = {fine_steps}")));
    }
    let stride = fine_steps / coarse_n;
    let mut eng = SvEngine::new(*model, Initial::Stationary, fine_steps, substream(seed, &[STREAM_VOL]))?;
    let n_fine = days * fine_steps;
    let mut v_fine = Vec::with_capacity(n_fine + 1);
    let mut x = Vec::with_capacity(days * coarse_n + 1);
    let mut level = 0.0;
    v_fine.push(eng.variance());
    x.push(level);
    for i in 1..=n_fine {
        level += eng.step();
        v_fine.push(eng.variance());
        if i % stride == 0 {
            x.push(level);
        }
    }
    if let Some(js) = jump {
        let jp = simulate_ts_jumps(js, days, coarse_n, seed)?;
        for (xi, ji) in x.iter_mut().zip(&jp.j) {
            *xi += ji;
        }
    }
    let v_coarse: Vec<f64> = v_fine.iter().step_by(stride).copied().collect();
    let z = add_noise(&x, &v_coarse, 1.0 / coarse_n as f64, noise, seed)?;
    Ok(SimulatedPanel {
        model: *model,
        jump: jump.copied(),
        noise: *noise,
        seed,
        days,
        fine_steps,
        coarse_n,
        v_fine,
        x,
        z,
    })
}

impl SimulatedPanel {
    pub fn delta_n(&self) -> f64 {
        1.0 / self.coarse_n as f64
    }

    fn split_days(&self, series: &[f64]) -> Vec<Vec<f64>> {
        (0..self.days)
            .map(|d| series[d * self.coarse_n..=(d + 1) * self.coarse_n].to_vec())
            .collect()
    }

    /// Observed log-prices as a gridded tick series.
    pub fn ticks(&self) -> Result<TickSeries> {
        TickSeries::from_days(self.delta_n(), self.split_days(&self.z))
    }

    pub fn returns(&self) -> Result<ReturnSeries> {
        log_returns(&self.ticks()?)
    }

    /// True variance at the coarse grid points.
    pub fn v_coarse(&self) -> Vec<f64> {
        self.v_fine.iter().step_by(self.fine_steps / self.coarse_n).copied().collect()
    }

    /// Empirical distribution of the true variance over `[0, T)` on the
    /// fine grid, each cell carrying its left-endpoint value.
    pub fn true_redf(&self) -> Result<Redf> {
        Redf::from_values(&self.v_fine[..self.v_fine.len() - 1], 1.0 / self.fine_steps as f64)
    }

    /// True integrated variance per day (left Riemann sum on the fine grid).
    pub fn true_iv(&self) -> Vec<f64> {
        let dt = 1.0 / self.fine_steps as f64;
        (0..self.days)
            .map(|d| self.v_fine[d * self.fine_steps..(d + 1) * self.fine_steps].iter().sum::<f64>() * dt)
            .collect()
    }
}

/// Variance path only, for bootstrap replicates that never touch prices.
pub fn simulate_variance(spec: &SvModelSpec, days: usize, steps_per_day: usize, rng: StreamRng) -> Result<Vec<f64>> {
    let mut eng = SvEngine::new(*spec, Initial::Stationary, steps_per_day, rng)?;
    let n = days * steps_per_day;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(eng.variance());
        eng.step();
    }
    Ok(v)
}
