//! Analytic results for the square-root (CIR) variance process
//! `dV = κ(v₀ − V)dt + ξ√V dB`, used as an oracle for the occupation law
//! and for the long-run variance of its empirical distribution function.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::gof::NullMarginal;
use crate::special::integrate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cir {
    pub kappa: f64,
    pub v0: f64,
    pub xi: f64,
}

/// `P(χ'²(d, nc) ≤ z)`, summing the Poisson mixture outward from its mode.
pub fn noncentral_chi2_cdf(z: f64, d: f64, nc: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if !z.is_finite() {
        return 1.0;
    }
    let x = 0.5 * z;
    let mu = 0.5 * nc;
    if mu < 1e-300 {
        return gamma_lr(0.5 * d, x);
    }
    let j0 = mu.floor();
    let a0 = 0.5 * d + j0;
    let w0 = (-mu + j0 * mu.ln() - ln_gamma(j0 + 1.0)).exp();
    let p0 = gamma_lr(a0, x);
    // Term x^a e^{−x}/Γ(a+1) links P(a, x) and P(a+1, x).
    let t0 = (a0 * x.ln() - x - ln_gamma(a0 + 1.0)).exp();

    let mut total = w0 * p0;
    let mut wsum = w0;
    let (mut w, mut p, mut t, mut j) = (w0, p0, t0, j0);
    // Upward: P(a+1) = P(a) − t(a); t(a+1) = t(a)·x/(a+1).
    loop {
        let a = 0.5 * d + j;
        p = (p - t).max(0.0);
        t *= x / (a + 1.0);
        j += 1.0;
        w *= mu / j;
        total += w * p;
        wsum += w;
        if w < 1e-18 * wsum && j > mu {
            break;
        }
    }
    // Downward: P(a−1) = P(a) + x^{a−1}e^{−x}/Γ(a).
    let (mut w, mut p, mut j) = (w0, p0, j0);
    let mut t = if a0 > 0.0 { t0 * a0 / x } else { 0.0 };
    while j >= 1.0 {
        let a = 0.5 * d + j;
        p = (p + t).min(1.0);
        t *= (a - 1.0) / x;
        w *= j / mu;
        j -= 1.0;
        total += w * p;
        wsum += w;
        if w < 1e-18 * wsum {
            break;
        }
    }
    // Normalise away the truncated Poisson tails.
    (total / wsum).clamp(0.0, 1.0)
}

impl Cir {
    pub fn new(kappa: f64, v0: f64, xi: f64) -> Result<Self> {
        if !(kappa > 0.0 && v0 > 0.0 && xi > 0.0) {
            return Err(Error::domain("kappa, v0 and xi must be positive"));
        }
        Ok(Self { kappa, v0, xi })
    }

    /// Stationary law Gamma(2κv₀/ξ², 2κ/ξ²).
    pub fn stationary(&self) -> NullMarginal {
        let rate = 2.0 * self.kappa / (self.xi * self.xi);
        NullMarginal::Gamma { shape: rate * self.v0, rate }
    }

    /// `P(V_t ≤ y | V_0 = v)`.
    pub fn transition_cdf(&self, t: f64, v: f64, y: f64) -> f64 {
        let e = (-self.kappa * t).exp();
        let scale = self.xi * self.xi * (1.0 - e) / (4.0 * self.kappa);
        let d = 4.0 * self.kappa * self.v0 / (self.xi * self.xi);
        let nc = v * e / scale;
        noncentral_chi2_cdf(y / scale, d, nc)
    }

    /// `P(V_0 ≤ x, V_t ≤ x)` under stationarity.
    pub fn joint_cdf(&self, t: f64, x: f64) -> f64 {
        let pi = self.stationary();
        if t <= 0.0 {
            return pi.cdf(x);
        }
        integrate(|v| pi.pdf(v) * self.transition_cdf(t, v, x), 0.0, x, 1e-12, 1e-10)
    }

    fn excess(&self, t: f64, x: f64, f2: f64) -> f64 {
        self.joint_cdf(t, x) - f2
    }

    /// Long-run variance `Σ(x) = 2∫₀^∞ (P(V₀ ≤ x, V_t ≤ x) − F(x)²) dt`.
    pub fn sigma(&self, x: f64) -> f64 {
        let f = self.stationary().cdf(x);
        let f2 = f * f;
        let tail = 40.0 / self.kappa;
        2.0 * piecewise(|t| self.excess(t, x, f2), tail)
    }

    /// Exact variance of `√T(F_T(x) − F(x))` for the continuous-time EDF
    /// over `[0, T]`: `2∫₀ᵀ (1 − t/T)(P(V₀ ≤ x, V_t ≤ x) − F(x)²) dt`.
    pub fn sigma_finite(&self, x: f64, horizon: f64) -> f64 {
        let f = self.stationary().cdf(x);
        let f2 = f * f;
        2.0 * piecewise(|t| (1.0 - t / horizon) * self.excess(t, x, f2), horizon)
    }
}

/// Integral over `[0, end]` on geometrically growing panels, which keeps
/// the steep region near zero lag well resolved.
fn piecewise<F: Fn(f64) -> f64>(f: F, end: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = 0.01_f64.min(end);
    while lo < end {
        total += integrate(&f, lo, hi, 1e-11, 1e-9);
        lo = hi;
        hi = (hi * 4.0).min(end);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate_to_infinity;

    fn default_cir() -> Cir {
        Cir::new(0.05, 1.0, 0.2).unwrap()
    }

    #[test]
    fn ncx2_central_case_matches_gamma() {
        for &z in &[0.1, 1.0, 3.0, 10.0] {
            assert!((noncentral_chi2_cdf(z, 5.0, 0.0) - gamma_lr(2.5, z / 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn ncx2_mean_and_normalisation() {
        for &(d, nc) in &[(5.0, 0.3), (5.0, 40.0), (2.5, 2000.0), (10.0, 1e5)] {
            let total = noncentral_chi2_cdf(1e9, d, nc);
            assert!((total - 1.0).abs() < 1e-10, "d={d} nc={nc}: {total}");
            let mean = integrate_to_infinity(|z| 1.0 - noncentral_chi2_cdf(z, d, nc), 0.0, 1e-9, 1e-10);
            assert!((mean / (d + nc) - 1.0).abs() < 1e-6, "d={d} nc={nc}: {mean}");
        }
    }

    #[test]
    fn transition_mean_reverts() {
        let cir = default_cir();
        for &(t, v) in &[(0.5, 0.4), (5.0, 2.0), (30.0, 1.0)] {
            let mean = integrate_to_infinity(|y| 1.0 - cir.transition_cdf(t, v, y), 0.0, 1e-10, 1e-10);
            let expect = v * (-cir.kappa * t).exp() + cir.v0 * (1.0 - (-cir.kappa * t).exp());
            assert!((mean - expect).abs() < 1e-6, "t={t}: {mean} vs {expect}");
        }
    }

    #[test]
    fn joint_cdf_limits() {
        let cir = default_cir();
        let x = 1.0;
        let f = cir.stationary().cdf(x);
        assert!((cir.joint_cdf(1e-6, x) - f).abs() < 2e-3);
        assert!((cir.joint_cdf(600.0, x) - f * f).abs() < 1e-6);
        // Positive dependence.
        assert!(cir.joint_cdf(10.0, x) > f * f);
    }

    /// Spectral form: with orthonormal Laguerre eigenfunctions φₙ of the
    /// CIR generator (eigenvalues −κn) and cₙ = E[1{V ≤ x}φₙ(V)],
    /// P(V₀ ≤ x, V_t ≤ x) = Σₙ e^{−κnt}cₙ².
    fn spectral_coefficients(cir: &Cir, x: f64, terms: usize) -> Vec<f64> {
        let NullMarginal::Gamma { shape, rate } = cir.stationary() else { unreachable!() };
        let alpha = shape - 1.0;
        let panels = 400;
        let mut c = vec![0.0; terms];
        // Gauss-Legendre 5-point nodes on each panel.
        let nodes = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        let weights = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let pi = cir.stationary();
        let h = x / panels as f64;
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * h;
            for (z, w) in nodes.iter().zip(&weights) {
                let v = mid + 0.5 * h * z;
                let y = rate * v;
                let wt = w * 0.5 * h * pi.pdf(v);
                // Normalised recurrence φₙ = Lₙ^{(α)}(y)·√(n!Γ(α+1)/Γ(n+α+1)).
                let (mut prev, mut cur) = (0.0, 1.0);
                c[0] += wt;
                for n in 0..terms - 1 {
                    let nf = n as f64;
                    let a_n = ((nf + 1.0) * (nf + alpha + 1.0)).sqrt();
                    let a_prev = (nf * (nf + alpha)).sqrt();
                    let next = ((2.0 * nf + alpha + 1.0 - y) * cur - a_prev * prev) / a_n;
                    prev = cur;
                    cur = next;
                    c[n + 1] += wt * cur;
                }
            }
        }
        c
    }

    #[test]
    fn sigma_matches_spectral_expansion() {
        let cir = default_cir();
        let x = cir.stationary().quantile(0.5).unwrap();
        let c = spectral_coefficients(&cir, x, 4000);
        assert!((c[0] - 0.5).abs() < 1e-10);
        let k = cir.kappa;
        let (mut s, mut s50) = (0.0, 0.0);
        for (n, cn) in c.iter().enumerate().skip(1) {
            let r = k * n as f64;
            s += 2.0 * cn * cn / r;
            s50 += 2.0 * cn * cn * (1.0 / r - (-(-r * 50.0).exp_m1()) / (r * r * 50.0));
        }
        let direct = cir.sigma(x);
        let direct50 = cir.sigma_finite(x, 50.0);
        assert!((direct / s - 1.0).abs() < 2e-3, "{direct} vs {s}");
        assert!((direct50 / s50 - 1.0).abs() < 2e-3, "{direct50} vs {s50}");
    }

    #[test]
    fn finite_horizon_variance_approaches_sigma() {
        let cir = default_cir();
        let x = cir.stationary().quantile(0.5).unwrap();
        let s = cir.sigma(x);
        let s_t = cir.sigma_finite(x, 2000.0);
        assert!(s > 0.0 && s_t < s);
        // The (1 − t/T) taper costs about ∫t·ρ(t)dt / T relative to Σ.
        assert!((s_t / s - 1.0).abs() < 0.03, "{s_t} vs {s}");
    }
}
