//! Realized EDF of a piecewise-constant variance path, its quantiles, and
//! long-run variance estimates for the √T-scaled process.

use crate::error::{Error, Result};
use crate::spotvol::SpotVariancePath;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

/// Step function F(x) = (time with V̂ ≤ x) / T for a path of equal-width cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Redf {
    /// Distinct cell values, increasing.
    support: Vec<f64>,
    /// Number of cells with value ≤ support[i].
    cum: Vec<u64>,
    total: u64,
    delta_n: f64,
}

impl Redf {
    /// Builds the EDF of `values`, each occupying a cell of width `delta_n`.
    pub fn from_values(values: &[f64], delta_n: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("variance path".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("variance path contains NaN"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut cum = Vec::new();
        for (i, &v) in sorted.iter().enumerate() {
            if support.last() == Some(&v) {
                *cum.last_mut().expect("nonempty") = i as u64 + 1;
            } else {
                support.push(v);
                cum.push(i as u64 + 1);
            }
        }
        Ok(Self { support, cum, total: values.len() as u64, delta_n })
    }

    pub fn from_path(path: &SpotVariancePath) -> Result<Self> {
        Self::from_values(&path.flat(), path.delta_n)
    }

    /// Distinct atoms, increasing.
    pub fn support(&self) -> &[f64] {
        &self.support
    }

    /// F at the i-th atom.
    pub fn value_at_atom(&self, i: usize) -> f64 {
        self.cum[i] as f64 / self.total as f64
    }

    /// F just below the i-th atom.
    pub fn left_limit_at_atom(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.value_at_atom(i - 1)
        }
    }

    pub fn horizon(&self) -> f64 {
        self.total as f64 * self.delta_n
    }

    pub fn cell_count(&self) -> u64 {
        self.total
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.support.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.value_at_atom(k - 1)
        }
    }

    /// inf{x : F(x) ≥ α}.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("quantile level {alpha} outside (0, 1)")));
        }
        let total = self.total as f64;
        let i = self.cum.partition_point(|&c| (c as f64 / total) < alpha);
        Ok(self.support[i.min(self.support.len() - 1)])
    }

    pub fn quantiles(&self, alphas: &[f64]) -> Result<Vec<f64>> {
        alphas.iter().map(|&a| self.quantile(a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LongRunConfig {
    /// Lag window is T^ξ.
    pub xi: f64,
}

impl Default for LongRunConfig {
    fn default() -> Self {
        Self { xi: 0.3 }
    }
}

impl LongRunConfig {
    /// Lag window in cells, ⌈T^ξ/Δ⌉.
    pub fn lag_cells(&self, horizon: f64, delta_n: f64) -> Result<usize> {
        if !(self.xi > 0.0 && self.xi < 1.0 / 3.0) {
            return Err(Error::invalid(format!("xi = {} outside (0, 1/3)", self.xi)));
        }
        let w = horizon.powf(self.xi);
        if !(horizon > w) {
            return Err(Error::invalid(format!("horizon {horizon} must exceed its lag window {w}")));
        }
        Ok(((w / delta_n) - 1e-9).ceil().max(1.0) as usize)
    }
}

fn indicator(values: &[f64], x: f64) -> Vec<f64> {
    values.iter().map(|&v| if v <= x { 1.0 } else { 0.0 }).collect()
}

/// c(t) = Σ_{s<W} a[s+t]·b[s] for t = 0..=max_lag, with W = a.len() − max_lag.
/// Uses an FFT correlation; entries are rounded when inputs are 0/1.
fn lagged_products(a: &[f64], b: &[f64], max_lag: usize, integer: bool) -> Vec<f64> {
    let n = a.len();
    let w = n - max_lag;
    let m = n.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fa.resize(m, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b[..w].iter().map(|&v| Complex::new(v, 0.0)).collect();
    fb.resize(m, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y.conj();
    }
    inv.process(&mut fa);
    let scale = 1.0 / m as f64;
    fa[..=max_lag]
        .iter()
        .map(|c| {
            let v = c.re * scale;
            if integer {
                v.round()
            } else {
                v
            }
        })
        .collect()
}

/// F_t(x, y) = mean over s ∈ [0, T−T^ξ) of 1{V_{s+t} ≤ x}·1{V_s ≤ y}, for a
/// lag of `lag_cells` cells.
pub fn joint_redf(values: &[f64], delta_n: f64, x: f64, y: f64, lag_cells: usize, cfg: &LongRunConfig) -> Result<f64> {
    let l = cfg.lag_cells(values.len() as f64 * delta_n, delta_n)?;
    if lag_cells > l {
        return Err(Error::invalid(format!("lag {lag_cells} cells beyond the window of {l}")));
    }
    let w = values.len() - l;
    let c = (0..w)
        .filter(|&s| values[s + lag_cells] <= x && values[s] <= y)
        .count();
    Ok(c as f64 / w as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LongRunEstimate {
    pub value: f64,
    /// The raw integral was negative and has been set to 0.
    pub floored: bool,
    pub lag_cells: usize,
}

fn floor_estimate(raw: f64, lag_cells: usize) -> LongRunEstimate {
    if raw < 0.0 {
        LongRunEstimate { value: 0.0, floored: true, lag_cells }
    } else {
        LongRunEstimate { value: raw, floored: false, lag_cells }
    }
}

/// 2∫₀^{T^ξ}(1 − t/T^ξ)(F_t(x, x) − F(x)²)dt by the trapezoid rule on the cell grid.
pub fn longrun_variance(values: &[f64], delta_n: f64, x: f64, cfg: &LongRunConfig) -> Result<LongRunEstimate> {
    let n = values.len();
    let l = cfg.lag_cells(n as f64 * delta_n, delta_n)?;
    let a = indicator(values, x);
    let f = a.iter().sum::<f64>() / n as f64;
    let c = lagged_products(&a, &a, l, true);
    let w = (n - l) as f64;
    let integrand: Vec<f64> = c
        .iter()
        .enumerate()
        .map(|(t, ct)| (1.0 - t as f64 / l as f64) * (ct / w - f * f))
        .collect();
    Ok(floor_estimate(2.0 * trapezoid(&integrand, delta_n), l))
}

/// ∫₀^{T^ξ}(F_t(x, y) + F_t(y, x) − 2F(x)F(y))dt without taper.
pub fn longrun_covariance(values: &[f64], delta_n: f64, x: f64, y: f64, cfg: &LongRunConfig) -> Result<LongRunEstimate> {
    let n = values.len();
    let l = cfg.lag_cells(n as f64 * delta_n, delta_n)?;
    let a = indicator(values, x);
    let b = indicator(values, y);
    let fx = a.iter().sum::<f64>() / n as f64;
    let fy = b.iter().sum::<f64>() / n as f64;
    let cxy = lagged_products(&a, &b, l, true);
    let cyx = lagged_products(&b, &a, l, true);
    let w = (n - l) as f64;
    let integrand: Vec<f64> = cxy.iter().zip(&cyx).map(|(p, q)| (p + q) / w - 2.0 * fx * fy).collect();
    Ok(floor_estimate(trapezoid(&integrand, delta_n), l))
}

fn trapezoid(v: &[f64], step: f64) -> f64 {
    crate::special::trapezoid(v, step)
}

/// √T·(F_{n,T}(x) − F(x))/√Σ(x).
pub fn clt_pivot(f_nt: f64, f: f64, sigma: f64, horizon: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("long-run variance {sigma} must be positive")));
    }
    Ok(horizon.sqrt() * (f_nt - f) / sigma.sqrt())
}

/// Levels 0.05, 0.10, ..., 0.95.
pub fn standard_levels() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

/// Parses `start:stop:step` into levels (inclusive of stop within 1e-9).
pub fn parse_levels(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad level range '{spec}'"))))
        .collect::<Result<_>>()?;
    match parts[..] {
        [a] => Ok(vec![a]),
        [a, b, s] if s > 0.0 && b >= a => {
            let k = ((b - a) / s + 1e-9).floor() as usize;
            Ok((0..=k).map(|i| a + i as f64 * s).map(|v| (v * 1e12).round() / 1e12).collect())
        }
        _ => Err(Error::invalid(format!("bad level range '{spec}'"))),
    }
}
