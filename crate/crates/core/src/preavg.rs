//! Pre-averaging: weight functions, their ψ constants, pre-averaged returns,
//! the pre-averaged bipower variation and the jump truncation threshold.

use crate::error::{Error, Result};
use crate::marketdata::ReturnSeries;
use crate::special::{integrate, normal_quantile};

/// A pre-averaging weight function on [0, 1] with g(0) = g(1) = 0.
pub trait Kernel: Sync {
    fn weight(&self, x: f64) -> f64;

    /// (∫g'², ∫g²). The default uses quadrature with a central-difference g'.
    fn psi_asymptotic(&self) -> (f64, f64) {
        let h = 1e-6;
        let d = |x: f64| (self.weight((x + h).min(1.0)) - self.weight((x - h).max(0.0))) / ((x + h).min(1.0) - (x - h).max(0.0));
        let psi1 = integrate(|x| d(x).powi(2), 0.0, 1.0, 1e-12, 1e-10);
        let psi2 = integrate(|x| self.weight(x).powi(2), 0.0, 1.0, 1e-14, 1e-12);
        (psi1, psi2)
    }
}

/// g(x) = min(x, 1 − x).
#[derive(Debug, Clone, Copy, Default)]
pub struct MinKernel;

impl Kernel for MinKernel {
    fn weight(&self, x: f64) -> f64 {
        x.min(1.0 - x)
    }

    fn psi_asymptotic(&self) -> (f64, f64) {
        (1.0, 1.0 / 12.0)
    }
}

pub fn kernel_min(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("kernel argument {x} outside [0, 1]")));
    }
    Ok(MinKernel.weight(x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiConstants {
    pub psi1_n: f64,
    pub psi2_n: f64,
    pub psi1: f64,
    pub psi2: f64,
}

pub fn psi_constants<K: Kernel + ?Sized>(k_n: usize, g: &K) -> Result<PsiConstants> {
    if k_n < 2 {
        return Err(Error::invalid(format!("k_n = {k_n} must be at least 2")));
    }
    let k = k_n as f64;
    let psi1_n = k * (1..=k_n)
        .map(|j| (g.weight(j as f64 / k) - g.weight((j - 1) as f64 / k)).powi(2))
        .sum::<f64>();
    let psi2_n = (1..k_n).map(|j| g.weight(j as f64 / k).powi(2)).sum::<f64>() / k;
    let (psi1, psi2) = g.psi_asymptotic();
    Ok(PsiConstants { psi1_n, psi2_n, psi1, psi2 })
}

/// ⌊θ/√Δ⌋, at least 2.
pub fn choose_kn(delta_n: f64, theta: f64) -> Result<usize> {
    if !(delta_n > 0.0) || !(theta > 0.0) {
        return Err(Error::invalid("delta_n and theta must be positive"));
    }
    Ok(((theta / delta_n.sqrt()).floor() as usize).max(2))
}

/// Window length, the ψ constants it implies, and the grid it was built for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreavgConfig {
    /// Nominal tuning constant.
    pub theta: f64,
    pub k_n: usize,
    pub delta_n: f64,
    pub psi: PsiConstants,
}

impl PreavgConfig {
    pub fn new(delta_n: f64, theta: f64) -> Result<Self> {
        Self::with_kn(choose_kn(delta_n, theta)?, delta_n, theta)
    }

    pub fn with_kn(k_n: usize, delta_n: f64, theta: f64) -> Result<Self> {
        if !(delta_n > 0.0) {
            return Err(Error::invalid("delta_n must be positive"));
        }
        Ok(Self { theta, k_n, delta_n, psi: psi_constants(k_n, &MinKernel)? })
    }

    /// k_n·√Δ, the θ actually realized by the integer window. The estimators
    /// use this value so that the finite-sample variance of a pre-averaged
    /// return is matched exactly.
    pub fn theta_eff(&self) -> f64 {
        self.k_n as f64 * self.delta_n.sqrt()
    }

    /// Weights g(j/k_n) for j = 1..k_n−1.
    pub fn weights(&self) -> Vec<f64> {
        let k = self.k_n as f64;
        (1..self.k_n).map(|j| MinKernel.weight(j as f64 / k)).collect()
    }

    /// ψ₂ⁿθ and ψ₁ⁿ/θ at the realized θ.
    pub fn bias_coefficients(&self) -> (f64, f64) {
        let th = self.theta_eff();
        (th * self.psi.psi2_n, self.psi.psi1_n / th)
    }
}

/// Pre-averaged returns, one vector per day. Days shorter than k_n are empty
/// and listed in `skipped_days`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreavgSeries {
    pub delta_n: f64,
    pub k_n: usize,
    pub days: Vec<Vec<f64>>,
    pub skipped_days: Vec<usize>,
}

/// Z̄ᵢ = Σ_{j=1}^{k−1} g(j/k)·Δ_{i+j}Z for i = 0..=n−k+1, where the day's
/// returns are Δ₁Z..ΔₙZ (stored zero-based).
pub fn preaverage_day(returns: &[f64], weights: &[f64]) -> Vec<f64> {
    let k = weights.len() + 1;
    let n = returns.len();
    if n < k {
        return Vec::new();
    }
    (0..=n + 1 - k)
        .map(|i| weights.iter().zip(&returns[i..]).map(|(w, r)| w * r).sum())
        .collect()
}

pub fn preaverage(returns: &ReturnSeries, cfg: &PreavgConfig) -> PreavgSeries {
    let w = cfg.weights();
    let mut skipped = Vec::new();
    let days = returns
        .days
        .iter()
        .enumerate()
        .map(|(d, r)| {
            if r.len() < cfg.k_n {
                skipped.push(d);
            }
            preaverage_day(r, &w)
        })
        .collect();
    PreavgSeries { delta_n: returns.delta_n, k_n: cfg.k_n, days, skipped_days: skipped }
}

/// −mean of adjacent return products; the daily noise variance estimate.
pub fn adjacent_noise_variance(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::insufficient("need at least two returns"));
    }
    let s: f64 = returns.windows(2).map(|w| w[0] * w[1]).sum();
    Ok(-s / (returns.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BipowerEstimate {
    pub iv: f64,
    /// The bias correction pushed the estimate below zero; `iv` was set to 0.
    pub floored: bool,
}

/// Bias-corrected pre-averaged bipower variation for one day.
///
/// The spot level (π/2)·mean|Z̄ᵢ||Z̄ᵢ₊ₖ| / (θψ₂√Δ) − ψ₁ω²/(θ²ψ₂) is scaled
/// by the day's duration `n·Δ`, where n is the number of returns.
pub fn preavg_bipower(pre_day: &[f64], n_returns: usize, cfg: &PreavgConfig, omega2: f64) -> Result<BipowerEstimate> {
    let k = cfg.k_n;
    if pre_day.len() < k + 1 {
        return Err(Error::insufficient(format!(
            "{} pre-averaged values, need at least {}",
            pre_day.len(),
            k + 1
        )));
    }
    let m = pre_day.len() - k;
    let s: f64 = (0..m).map(|i| (pre_day[i] * pre_day[i + k]).abs()).sum();
    let th = cfg.theta_eff();
    let psi = cfg.psi;
    let level = std::f64::consts::FRAC_PI_2 * (s / m as f64) / (th * psi.psi2_n * cfg.delta_n.sqrt())
        - psi.psi1_n * omega2 / (th * th * psi.psi2_n);
    let iv = level * n_returns as f64 * cfg.delta_n;
    Ok(if iv < 0.0 { BipowerEstimate { iv: 0.0, floored: true } } else { BipowerEstimate { iv, floored: false } })
}

/// Daily bipower estimates with the noise variance taken from adjacent
/// return products of the same day. Days too short for the estimator are
/// reported as errors carrying the day index.
pub fn daily_bipower(returns: &ReturnSeries, cfg: &PreavgConfig) -> Result<Vec<BipowerEstimate>> {
    let w = cfg.weights();
    returns
        .days
        .iter()
        .enumerate()
        .map(|(d, r)| {
            let pre = preaverage_day(r, &w);
            let omega2 = adjacent_noise_variance(r)?;
            preavg_bipower(&pre, r.len(), cfg, omega2).map_err(|e| Error::Replicate { index: d, source: Box::new(e) })
        })
        .collect()
}

/// q_{1−α}·√IV·Δ^ω̄. A zero IV yields a zero threshold, which truncates
/// every pre-averaged return.
pub fn truncation_threshold(iv: f64, delta_n: f64, alpha_q: f64, omega_bar: f64) -> Result<f64> {
    if !(iv >= 0.0) {
        return Err(Error::domain(format!("integrated variance {iv} must be nonnegative")));
    }
    if !(omega_bar > 0.0 && omega_bar < 0.25) {
        return Err(Error::invalid(format!("omega_bar {omega_bar} outside (0, 0.25)")));
    }
    if !(alpha_q > 0.0 && alpha_q < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha_q} outside (0, 1)")));
    }
    Ok(normal_quantile(1.0 - alpha_q) * iv.sqrt() * delta_n.powf(omega_bar))
}
