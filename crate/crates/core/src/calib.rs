//! Method-of-moments calibration of variance models to daily integrated
//! variance.
//!
//! The sample mean, variance and first two autocovariances of a daily IV
//! series are matched to their model counterparts. For a stationary
//! variance process with autocovariance γ,
//! `var(IV) = 2∫₀¹(1−t)γ(t)dt` and `cov(IV₀, IV_j) = ∫₋₁¹(1−|t|)γ(j+t)dt`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::marketdata::ReturnSeries;
use crate::preavg::{daily_bipower, PreavgConfig};
use crate::rng::substream;
use crate::sim::SvModelSpec;
use crate::special::integrate;
use crate::{Error, Result};

/// Bias-corrected pre-averaged bipower variation, one value per day.
pub fn daily_iv_series(returns: &ReturnSeries, cfg: &PreavgConfig) -> Result<Vec<f64>> {
    Ok(daily_bipower(returns, cfg)?.into_iter().map(|b| b.iv).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvMoments {
    pub mean: f64,
    pub variance: f64,
    pub cov1: f64,
    pub cov2: f64,
}

impl IvMoments {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.cov1, self.cov2]
    }

    /// Sample moments of a daily IV series (autocovariances with divisor N).
    pub fn from_series(iv: &[f64]) -> Result<Self> {
        if iv.len() < 10 {
            return Err(Error::insufficient(format!("need at least 10 days, got {}", iv.len())));
        }
        if iv.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("IV series contains non-finite values"));
        }
        let n = iv.len() as f64;
        let mean = iv.iter().sum::<f64>() / n;
        let acov = |lag: usize| iv.iter().zip(&iv[lag..]).map(|(a, b)| (a - mean) * (b - mean)).sum::<f64>() / n;
        Ok(Self { mean, variance: acov(0), cov1: acov(1), cov2: acov(2) })
    }
}

/// IV moments from the mean and autocovariance function of V.
pub fn moments_from_acov<G: Fn(f64) -> f64>(mean: f64, acov: G) -> IvMoments {
    let tol = 1e-15;
    let variance = 2.0 * integrate(|t| (1.0 - t) * acov(t), 0.0, 1.0, tol, 1e-13);
    let lag = |j: f64| {
        integrate(|t| (1.0 + t) * acov(j + t), -1.0, 0.0, tol, 1e-13)
            + integrate(|t| (1.0 - t) * acov(j + t), 0.0, 1.0, tol, 1e-13)
    };
    IvMoments { mean, variance, cov1: lag(1.0), cov2: lag(2.0) }
}

pub fn heston_iv_moments(kappa: f64, v0: f64, xi: f64) -> Result<IvMoments> {
    if !(kappa > 0.0 && v0 > 0.0 && xi >= 0.0) {
        return Err(Error::domain("heston moments need kappa, v0 > 0 and xi >= 0"));
    }
    let e = (-kappa).exp();
    let s = xi * xi * v0 / kappa.powi(3);
    let cov1 = 0.5 * s * (1.0 - e).powi(2);
    Ok(IvMoments { mean: v0, variance: s * (e + kappa - 1.0), cov1, cov2: e * cov1 })
}

pub fn tsou_iv_moments(kappa: f64, c: f64, lambda: f64) -> Result<IvMoments> {
    if !(kappa > 0.0 && c > 0.0 && lambda > 0.0) {
        return Err(Error::domain("tsou moments need kappa, c, lambda > 0"));
    }
    let pi = std::f64::consts::PI;
    let e = (-kappa).exp();
    let cov1 = (pi * c * c / (4.0 * lambda.powi(3))).sqrt() * (1.0 - e).powi(2) / (kappa * kappa);
    Ok(IvMoments {
        mean: c * (pi / lambda).sqrt(),
        variance: c * pi.sqrt() / (lambda.powf(1.5) * kappa * kappa) * (e + kappa - 1.0),
        cov1,
        cov2: e * cov1,
    })
}

/// Log-normal variance: `cov(V₀, V_t) = E[V]²(exp(s²e^{−κt}) − 1)` with
/// `s² = ξ²/(2κ)`; IV moments by quadrature.
pub fn expou_iv_moments(kappa: f64, v0: f64, xi: f64) -> Result<IvMoments> {
    if !(kappa > 0.0 && xi >= 0.0 && v0.is_finite()) {
        return Err(Error::domain("expou moments need kappa > 0, xi >= 0"));
    }
    let s2 = xi * xi / (2.0 * kappa);
    let mean = (v0 + 0.5 * s2).exp();
    Ok(moments_from_acov(mean, |t| mean * mean * (s2 * (-kappa * t.abs()).exp()).exp_m1()))
}

/// Model moments of the family of `spec`.
pub fn model_iv_moments(spec: &SvModelSpec) -> Result<IvMoments> {
    match *spec {
        SvModelSpec::Heston { kappa, v0, xi, .. } => heston_iv_moments(kappa, v0, xi),
        SvModelSpec::Expou { kappa, v0, xi, .. } => expou_iv_moments(kappa, v0, xi),
        SvModelSpec::Tsou { kappa, c, lambda, .. } => tsou_iv_moments(kappa, c, lambda),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Heston,
    Expou,
    Tsou,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "heston" => Ok(Family::Heston),
            "expou" => Ok(Family::Expou),
            "tsou" => Ok(Family::Tsou),
            _ => Err(Error::invalid(format!("unknown model family '{s}'"))),
        }
    }
}

impl Family {
    pub fn of(spec: &SvModelSpec) -> Self {
        match spec {
            SvModelSpec::Heston { .. } => Family::Heston,
            SvModelSpec::Expou { .. } => Family::Expou,
            SvModelSpec::Tsou { .. } => Family::Tsou,
        }
    }

    /// Generic starting point, for when no better guess is available.
    pub fn default_start(&self, mean_iv: f64) -> SvModelSpec {
        let m = mean_iv.max(1e-8);
        match self {
            Family::Heston => SvModelSpec::Heston { kappa: 0.1, v0: m, xi: 0.3 * (0.2 * m).sqrt(), rho: -(0.5f64.sqrt()) },
            Family::Expou => SvModelSpec::Expou { kappa: 0.1, v0: m.ln() - 0.5, xi: 0.4, rho: -(0.5f64.sqrt()) },
            Family::Tsou => SvModelSpec::Tsou { kappa: 0.1, c: m * (1.0 / std::f64::consts::PI).sqrt(), lambda: 1.0, beta: 0.5 },
        }
    }
}

fn logistic(w: f64) -> f64 {
    1.0 / (1.0 + (-w).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unconstrained coordinates. Heston uses `ξ = √(2κv₀)·logistic(w)`, so
/// every point satisfies the Feller condition; ρ is not identified by the
/// moments and is carried over from the start.
fn to_free(spec: &SvModelSpec) -> Vec<f64> {
    match *spec {
        SvModelSpec::Heston { kappa, v0, xi, .. } => {
            let ratio = (xi / (2.0 * kappa * v0).sqrt()).clamp(1e-9, 1.0 - 1e-9);
            vec![kappa.ln(), v0.ln(), logit(ratio)]
        }
        SvModelSpec::Expou { kappa, v0, xi, .. } => vec![kappa.ln(), v0, xi.max(1e-12).ln()],
        SvModelSpec::Tsou { kappa, c, lambda, .. } => vec![kappa.ln(), c.ln(), lambda.ln()],
    }
}

fn from_free(template: &SvModelSpec, u: &[f64]) -> SvModelSpec {
    match *template {
        SvModelSpec::Heston { rho, .. } => {
            let (kappa, v0) = (u[0].exp(), u[1].exp());
            SvModelSpec::Heston { kappa, v0, xi: (2.0 * kappa * v0).sqrt() * logistic(u[2]), rho }
        }
        SvModelSpec::Expou { rho, .. } => SvModelSpec::Expou { kappa: u[0].exp(), v0: u[1], xi: u[2].exp(), rho },
        SvModelSpec::Tsou { beta, .. } => SvModelSpec::Tsou { kappa: u[0].exp(), c: u[1].exp(), lambda: u[2].exp(), beta },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the simplex objective spread falls below this.
    pub ftol: f64,
    pub seed: u64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { restarts: 5, max_iter: 4000, ftol: 1e-22, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub params: SvModelSpec,
    pub objective: f64,
    pub iterations: usize,
    pub restarts_used: usize,
    pub converged: bool,
}

/// Weighted residuals `(m(υ) − m̂)/|m̂|`.
fn residuals(targets: &IvMoments, spec: &SvModelSpec) -> Option<[f64; 4]> {
    let m = model_iv_moments(spec).ok()?.as_array();
    let t = targets.as_array();
    let mut r = [0.0; 4];
    for i in 0..4 {
        r[i] = (m[i] - t[i]) / t[i].abs().max(1e-12);
        if !r[i].is_finite() {
            return None;
        }
    }
    Some(r)
}

fn objective(targets: &IvMoments, template: &SvModelSpec, u: &[f64]) -> f64 {
    if u.iter().any(|x| !x.is_finite() || x.abs() > 50.0) {
        return f64::INFINITY;
    }
    residuals(targets, &from_free(template, u)).map_or(f64::INFINITY, |r| r.iter().map(|x| x * x).sum())
}

struct NmResult {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], step: f64, max_iter: usize, ftol: f64) -> NmResult {
    let n = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let size = pts[1..].iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if (vals[n] - vals[0]).abs() <= ftol && vals[0].is_finite() || size < 1e-13 {
            converged = vals[0].is_finite();
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    pts[i] = pts[i].iter().zip(&pts[0]).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    vals[i] = f(&pts[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("nonempty simplex");
    NmResult { x: pts[best].clone(), f: vals[best], iterations, converged }
}

/// Levenberg-Marquardt refinement on the weighted residuals with a
/// forward-difference Jacobian.
fn polish(targets: &IvMoments, template: &SvModelSpec, start: &[f64]) -> (Vec<f64>, f64) {
    let n = start.len();
    let res = |u: &[f64]| -> Option<[f64; 4]> {
        if u.iter().any(|x| !x.is_finite() || x.abs() > 50.0) {
            return None;
        }
        residuals(targets, &from_free(template, u))
    };
    let mut u = start.to_vec();
    let Some(mut r) = res(&u) else { return (u, f64::INFINITY) };
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-3;
    for _ in 0..100 {
        let mut jac = vec![[0.0; 4]; n];
        for j in 0..n {
            let h = 1e-7 * (1.0 + u[j].abs());
            let mut up = u.clone();
            up[j] += h;
            let Some(rp) = res(&up) else { return (u, cost) };
            for i in 0..4 {
                jac[j][i] = (rp[i] - r[i]) / h;
            }
        }
        // Normal equations (JᵀJ + μ·diag(JᵀJ)) δ = −Jᵀr.
        let mut a = vec![vec![0.0; n]; n];
        let mut g = vec![0.0; n];
        for p in 0..n {
            for q in 0..n {
                a[p][q] = (0..4).map(|i| jac[p][i] * jac[q][i]).sum();
            }
            g[p] = -(0..4).map(|i| jac[p][i] * r[i]).sum::<f64>();
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = a.clone();
            for p in 0..n {
                m[p][p] *= 1.0 + mu;
            }
            let Some(delta) = solve(m, g.clone()) else { break };
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + b).collect();
            if let Some(rt) = res(&trial) {
                let ct: f64 = rt.iter().map(|x| x * x).sum();
                if ct < cost {
                    u = trial;
                    r = rt;
                    cost = ct;
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !improved || cost < 1e-30 {
            break;
        }
    }
    (u, cost)
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Minimizes `Σᵢ((mᵢ(υ) − m̂ᵢ)/m̂ᵢ)²` over the family of `init`.
///
/// The first run starts at `init`; later restarts start at the best point so
/// far, jittered. Fails with the best iterate if no run converges.
pub fn gmm_fit(targets: &IvMoments, init: &SvModelSpec, options: &GmmOptions) -> Result<GmmFit> {
    init.validate()?;
    if targets.as_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("moment targets must be finite"));
    }
    let f = |u: &[f64]| objective(targets, init, u);
    let mut rng = substream(options.seed, &[0x6d6d]);
    let mut best_x = to_free(init);
    let mut best_f = f(&best_x);
    let mut iterations = 0;
    let mut any_converged = false;
    let mut restarts_used = 0;
    for attempt in 0..options.restarts.max(1) {
        restarts_used = attempt + 1;
        let start: Vec<f64> = if attempt == 0 {
            best_x.clone()
        } else {
            best_x.iter().map(|x| x + 0.3 * (rng.random::<f64>() - 0.5)).collect()
        };
        let nm = nelder_mead(&f, &start, 0.25, options.max_iter, options.ftol);
        iterations += nm.iterations;
        let (x, fx) = polish(targets, init, &nm.x);
        let (x, fx) = if fx < nm.f { (x, fx) } else { (nm.x, nm.f) };
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
        any_converged |= nm.converged;
        if any_converged && best_f < 1e-20 {
            break;
        }
    }
    if !any_converged || !best_f.is_finite() {
        return Err(Error::NonConvergence { restarts: restarts_used, best_objective: best_f, best_point: best_x });
    }
    Ok(GmmFit { params: from_free(init, &best_x), objective: best_f, iterations, restarts_used, converged: true })
}

/// Calibrates the family of `init` to the daily IV of `returns`.
pub fn calibrate_returns(returns: &ReturnSeries, init: &SvModelSpec, cfg: &PreavgConfig, options: &GmmOptions) -> Result<GmmFit> {
    let iv = daily_iv_series(returns, cfg)?;
    gmm_fit(&IvMoments::from_series(&iv)?, init, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::simulate_tsou;

    fn double_integral<G: Fn(f64) -> f64>(acov: G, lag: f64) -> f64 {
        // Split the inner integral at the kink u = s of |lag + u − s|.
        let inner = |s: f64| {
            let g = |u: f64| acov((lag + u - s).abs());
            integrate(g, 0.0, s, 1e-15, 1e-13) + integrate(g, s, 1.0, 1e-15, 1e-13)
        };
        integrate(inner, 0.0, 1.0, 1e-14, 1e-12)
    }

    #[test]
    fn heston_formulas_match_double_integral() {
        let (k, v0, xi) = (0.05, 1.0, 0.2);
        let m = heston_iv_moments(k, v0, xi).unwrap();
        let acov = |t: f64| xi * xi * v0 / (2.0 * k) * (-k * t).exp();
        assert!((m.variance - double_integral(acov, 0.0)).abs() < 1e-9);
        assert!((m.cov1 - double_integral(acov, 1.0)).abs() < 1e-9);
        assert!((m.cov2 - double_integral(acov, 2.0)).abs() < 1e-9);
        assert!((m.variance - 0.39341).abs() < 1e-4, "{}", m.variance);
        let z = heston_iv_moments(k, v0, 0.0).unwrap();
        assert_eq!((z.mean, z.variance, z.cov1), (1.0, 0.0, 0.0));
    }

    #[test]
    fn tsou_formulas_match_double_integral() {
        let (k, c, l) = (0.3, 1.2, 2.0);
        let m = tsou_iv_moments(k, c, l).unwrap();
        // var(V) = cΓ(3/2)λ^{−3/2}, autocorrelation e^{−κt}.
        let var_v = c * std::f64::consts::PI.sqrt() / 2.0 / l.powf(1.5);
        let acov = |t: f64| var_v * (-k * t).exp();
        assert!((m.variance / double_integral(acov, 0.0) - 1.0).abs() < 1e-9);
        assert!((m.cov1 / double_integral(acov, 1.0) - 1.0).abs() < 1e-9);
        assert!((m.cov2 / double_integral(acov, 2.0) - 1.0).abs() < 1e-9);
        let unit = tsou_iv_moments(1.0, 1.0, std::f64::consts::PI).unwrap();
        assert!((unit.mean - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tsou_variance_decreases_in_kappa() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let k = 2.0 + i as f64 * 0.5;
            let v = tsou_iv_moments(k, 1.0, 2.0).unwrap().variance;
            assert!(v < prev);
            prev = v;
        }
        let big = tsou_iv_moments(1e4, 1.0, 2.0).unwrap().variance;
        let limit = std::f64::consts::PI.sqrt() / 1e4 / 2.0f64.powf(1.5);
        assert!((big / limit - 1.0).abs() < 1e-3);
    }

    #[test]
    fn expou_moments() {
        let m = expou_iv_moments(0.08, -0.3, 0.45).unwrap();
        assert!((m.mean - 1.395).abs() < 1e-3);
        let acov = |t: f64| m.mean * m.mean * ((0.45f64.powi(2) / 0.16) * (-0.08 * t).exp()).exp_m1();
        assert!((m.variance / double_integral(acov, 0.0) - 1.0).abs() < 1e-8);
        assert!((m.cov2 / double_integral(acov, 2.0) - 1.0).abs() < 1e-8);
        assert!(m.variance > m.cov1 && m.cov1 > m.cov2 && m.cov2 > 0.0);
        let flat = expou_iv_moments(0.08, -0.3, 0.0).unwrap();
        assert!((flat.mean - (-0.3f64).exp()).abs() < 1e-15 && flat.variance == 0.0);
    }

    #[test]
    fn sample_moments() {
        assert!(IvMoments::from_series(&[1.0; 9]).is_err());
        let m = IvMoments::from_series(&[0.0; 12]).unwrap();
        assert_eq!(m.as_array(), [0.0; 4]);
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = IvMoments::from_series(&alt).unwrap();
        assert!((m.variance - 1.0).abs() < 1e-12 && (m.cov1 + 0.99).abs() < 1e-12);
    }

    #[test]
    fn exact_round_trip_all_families() {
        let specs = [
            SvModelSpec::heston_default(),
            SvModelSpec::expou_default(),
            SvModelSpec::Tsou { kappa: 0.4, c: 0.8, lambda: 2.5, beta: 0.5 },
        ];
        for truth in specs {
            let m = model_iv_moments(&truth).unwrap();
            let init = Family::of(&truth).default_start(m.mean);
            let fit = gmm_fit(&m, &init, &GmmOptions::default()).unwrap();
            let a = to_free(&truth);
            let b = to_free(&fit.params);
            let (p, q) = (param_vec(&truth), param_vec(&fit.params));
            for (x, y) in p.iter().zip(&q) {
                assert!((x - y).abs() < 1e-6, "{truth:?} -> {:?} ({a:?} vs {b:?})", fit.params);
            }
        }
    }

    fn param_vec(s: &SvModelSpec) -> Vec<f64> {
        match *s {
            SvModelSpec::Heston { kappa, v0, xi, .. } | SvModelSpec::Expou { kappa, v0, xi, .. } => vec![kappa, v0, xi],
            SvModelSpec::Tsou { kappa, c, lambda, .. } => vec![kappa, c, lambda],
        }
    }

    #[test]
    fn heston_fit_respects_feller() {
        // Targets from a non-Feller point: the fit stays on the admissible side.
        let m = heston_iv_moments(0.05, 1.0, 0.5).unwrap();
        let init = Family::Heston.default_start(m.mean);
        let fit = gmm_fit(&m, &init, &GmmOptions::default());
        if let Ok(fit) = fit {
            assert_eq!(fit.params.feller(), Some(true));
        }
    }

    #[test]
    fn simulated_tsou_moments_match() {
        let spec = SvModelSpec::Tsou { kappa: 0.5, c: 1.0, lambda: std::f64::consts::PI, beta: 0.5 };
        let path = simulate_tsou(&spec, 2000, 100, 21).unwrap();
        let iv: Vec<f64> = path.v[..path.v.len() - 1].chunks(100).map(|d| d.iter().sum::<f64>() / 100.0).collect();
        let m = tsou_iv_moments(0.5, 1.0, std::f64::consts::PI).unwrap().as_array();
        // Batch-means standard errors over 20 blocks of 100 days.
        let blocks: Vec<[f64; 4]> = iv.chunks(100).map(|b| IvMoments::from_series(b).unwrap().as_array()).collect();
        let whole = IvMoments::from_series(&iv).unwrap().as_array();
        for k in 0..4 {
            let bm = blocks.iter().map(|b| b[k]).sum::<f64>() / 20.0;
            let sd = (blocks.iter().map(|b| (b[k] - bm).powi(2)).sum::<f64>() / 19.0).sqrt();
            let se = sd / 20f64.sqrt();
            assert!((whole[k] - m[k]).abs() < 3.0 * se, "moment {k}: {} vs {} (se {se})", whole[k], m[k]);
        }
    }
}
