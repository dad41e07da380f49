//! Candidate stationary laws for spot variance.

use crate::error::{Error, Result};
use crate::special::{integrate, integrate_to_infinity, ln_bessel_k, normal_cdf, normal_quantile};
use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

/// Anything with a distribution function. Closures `Fn(f64) -> f64` qualify.
pub trait Cdf: Sync {
    fn cdf(&self, x: f64) -> f64;

    /// F(x−). Continuous laws keep the default.
    fn left_limit(&self, x: f64) -> f64 {
        self.cdf(x)
    }

    fn is_continuous(&self) -> bool {
        true
    }

    /// CDF at increasing `xs`; families without a closed form override this
    /// with an incremental evaluation.
    fn cdf_sorted(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.cdf(x)).collect()
    }
}

impl<F: Fn(f64) -> f64 + Sync> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NullMarginal {
    /// Density ∝ x^{shape−1}e^{−rate·x}.
    Gamma { shape: f64, rate: f64 },
    /// ln X ~ N(mu, sigma2).
    Lognormal { mu: f64, sigma2: f64 },
    /// Density √(ν/(2πx³))·exp(−ν(x−μ)²/(2μ²x)); mean μ, variance μ³/ν.
    InverseGaussian { mu: f64, nu: f64 },
    /// Density ∝ x^{p−1}exp(−(ax + b/x)/2).
    Gig { a: f64, b: f64, p: f64 },
}

/// IG parameters of the stationary law of an OU process driven by a
/// tempered 1/2-stable subordinator with intensity c and tempering λ.
pub fn ig_from_ts(c: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(c > 0.0 && lambda > 0.0) {
        return Err(Error::domain("c and lambda must be positive"));
    }
    let pi = std::f64::consts::PI;
    Ok((c * (pi / lambda).sqrt(), 2.0 * pi * c * c))
}

pub fn gig_pdf(x: f64, a: f64, b: f64, p: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !p.is_finite() {
        return Err(Error::domain("GIG needs a > 0, b > 0 and finite p"));
    }
    if !(x > 0.0) {
        return Err(Error::domain(format!("GIG density at non-positive x = {x}")));
    }
    Ok(NullMarginal::Gig { a, b, p }.pdf(x))
}

/// ln Φ(−z), accurate in the far tail.
fn ln_normal_sf(z: f64) -> f64 {
    if z < 37.0 {
        (0.5 * crate::special::erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
    }
}

impl NullMarginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NullMarginal::Gamma { shape, rate } => shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite(),
            NullMarginal::Lognormal { mu, sigma2 } => mu.is_finite() && sigma2 > 0.0 && sigma2.is_finite(),
            NullMarginal::InverseGaussian { mu, nu } => mu > 0.0 && nu > 0.0 && mu.is_finite() && nu.is_finite(),
            NullMarginal::Gig { a, b, p } => a > 0.0 && b > 0.0 && p.is_finite() && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid parameters for {self:?}")))
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            NullMarginal::Gamma { .. } => "gamma",
            NullMarginal::Lognormal { .. } => "lognormal",
            NullMarginal::InverseGaussian { .. } => "inverse_gaussian",
            NullMarginal::Gig { .. } => "gig",
        }
    }

    fn gig_ln_norm(a: f64, b: f64, p: f64) -> f64 {
        0.5 * p * (a / b).ln() - std::f64::consts::LN_2 - ln_bessel_k(p, (a * b).sqrt())
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            NullMarginal::Gamma { shape, rate } => {
                (shape - 1.0) * x.ln() - rate * x + shape * rate.ln() - ln_gamma(shape)
            }
            NullMarginal::Lognormal { mu, sigma2 } => {
                let l = x.ln();
                -(l - mu).powi(2) / (2.0 * sigma2) - l - 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln()
            }
            NullMarginal::InverseGaussian { mu, nu } => {
                0.5 * (nu / (2.0 * std::f64::consts::PI * x.powi(3))).ln() - nu * (x - mu).powi(2) / (2.0 * mu * mu * x)
            }
            NullMarginal::Gig { a, b, p } => Self::gig_ln_norm(a, b, p) + (p - 1.0) * x.ln() - 0.5 * (a * x + b / x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn mean(&self) -> f64 {
        match *self {
            NullMarginal::Gamma { shape, rate } => shape / rate,
            NullMarginal::Lognormal { mu, sigma2 } => (mu + 0.5 * sigma2).exp(),
            NullMarginal::InverseGaussian { mu, .. } => mu,
            NullMarginal::Gig { a, b, p } => {
                let w = (a * b).sqrt();
                (b / a).sqrt() * (ln_bessel_k(p + 1.0, w) - ln_bessel_k(p, w)).exp()
            }
        }
    }

    fn mode_guess(&self) -> f64 {
        match *self {
            NullMarginal::Gig { a, b, p } => ((p - 1.0) + ((p - 1.0).powi(2) + a * b).sqrt()) / a,
            _ => self.mean(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match *self {
            NullMarginal::Gamma { shape, rate } => gamma_lr(shape, rate * x),
            NullMarginal::Lognormal { mu, sigma2 } => normal_cdf((x.ln() - mu) / sigma2.sqrt()),
            NullMarginal::InverseGaussian { mu, nu } => {
                let s = (nu / x).sqrt();
                let z1 = s * (x / mu - 1.0);
                let z2 = s * (x / mu + 1.0);
                (normal_cdf(z1) + (2.0 * nu / mu + ln_normal_sf(z2)).exp()).min(1.0)
            }
            NullMarginal::Gig { .. } => {
                let f = |t: f64| self.pdf(t);
                if x <= self.mode_guess() {
                    integrate(f, 0.0, x, 1e-15, 1e-12).clamp(0.0, 1.0)
                } else {
                    (1.0 - integrate_to_infinity(f, x, 1e-15, 1e-12)).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// 1 − F(x), computed without cancellation where a closed form allows.
    pub fn sf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 1.0;
        }
        match *self {
            NullMarginal::Gamma { shape, rate } => gamma_ur(shape, rate * x),
            NullMarginal::Lognormal { mu, sigma2 } => normal_cdf(-(x.ln() - mu) / sigma2.sqrt()),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// F⁻¹(u) by safeguarded Newton iteration on a bracket.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile level {u} outside (0, 1)")));
        }
        if let NullMarginal::Lognormal { mu, sigma2 } = *self {
            return Ok((mu + sigma2.sqrt() * normal_quantile(u)).exp());
        }
        let guess = self.mean();
        let (mut lo, mut hi) = (guess, guess);
        while self.cdf(lo) > u {
            lo *= 0.5;
            if lo < 1e-300 {
                return Ok(lo);
            }
        }
        while self.cdf(hi) < u {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::domain("quantile bracket diverged"));
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.cdf(x) - u;
            if fx == 0.0 {
                return Ok(x);
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let step = fx / self.pdf(x);
            let mut next = x - step;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NullMarginal::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters").sample(rng)
            }
            NullMarginal::Lognormal { mu, sigma2 } => (mu + sigma2.sqrt() * crate::rng::normal(rng)).exp(),
            NullMarginal::InverseGaussian { mu, nu } => {
                InverseGaussian::new(mu, nu).expect("validated IG parameters").sample(rng)
            }
            NullMarginal::Gig { a, b, p } => GigSampler::new(a, b, p).sample(rng),
        }
    }
}

impl Cdf for NullMarginal {
    fn cdf(&self, x: f64) -> f64 {
        NullMarginal::cdf(self, x)
    }

    fn cdf_sorted(&self, xs: &[f64]) -> Vec<f64> {
        if !matches!(self, NullMarginal::Gig { .. }) {
            return xs.iter().map(|&x| NullMarginal::cdf(self, x)).collect();
        }
        // Accumulate the density between neighbours, re-anchoring on the
        // exact CDF periodically.
        let mut out = Vec::with_capacity(xs.len());
        let mut prev_x = 0.0;
        let mut acc = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            if i % 1024 == 0 || prev_x <= 0.0 {
                acc = NullMarginal::cdf(self, x);
            } else if x > prev_x {
                acc += integrate(|t| self.pdf(t), prev_x, x, 1e-16, 1e-12);
            }
            acc = acc.clamp(0.0, 1.0);
            out.push(acc);
            prev_x = x.max(prev_x);
        }
        out
    }
}

/// Ratio-of-uniforms sampler for the GIG law with a mode shift.
#[derive(Debug, Clone, Copy)]
pub struct GigSampler {
    /// √(b/a): X = scale·Y with Y ∝ y^{λ−1}exp(−ω(y + 1/y)/2).
    scale: f64,
    lambda: f64,
    omega: f64,
    invert: bool,
    mode: f64,
    ln_h_mode: f64,
    v_minus: f64,
    v_plus: f64,
}

impl GigSampler {
    pub fn new(a: f64, b: f64, p: f64) -> Self {
        let omega = (a * b).sqrt();
        let lambda = p.abs();
        let mode = ((lambda - 1.0) + ((lambda - 1.0).powi(2) + omega * omega).sqrt()) / omega;
        let ln_h = |y: f64| (lambda - 1.0) * y.ln() - 0.5 * omega * (y + 1.0 / y);
        let ln_h_mode = ln_h(mode);
        // Extremes of (y − m)·√h(y) on each side of the mode, from the roots
        // of d/dy [ln|y − m| + ln h(y)/2].
        let dlog = |y: f64| 1.0 / (y - mode) + 0.5 * ((lambda - 1.0) / y - 0.5 * omega + 0.5 * omega / (y * y));
        let mut hi = mode * 2.0 + 1.0;
        while dlog(hi) > 0.0 {
            hi *= 2.0;
        }
        let y_plus = bisect(dlog, mode * (1.0 + 1e-12) + 1e-300, hi);
        let y_minus = bisect(dlog, 1e-300, mode * (1.0 - 1e-12));
        let env = |y: f64| (y - mode) * (0.5 * (ln_h(y) - ln_h_mode)).exp();
        Self {
            scale: (b / a).sqrt(),
            lambda,
            omega,
            invert: p < 0.0,
            mode,
            ln_h_mode,
            v_minus: env(y_minus).min(0.0),
            v_plus: env(y_plus).max(0.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let ln_h = |y: f64| (self.lambda - 1.0) * y.ln() - 0.5 * self.omega * (y + 1.0 / y) - self.ln_h_mode;
        loop {
            let u: f64 = rng.random::<f64>();
            if u == 0.0 {
                continue;
            }
            let v = self.v_minus + (self.v_plus - self.v_minus) * rng.random::<f64>();
            let y = v / u + self.mode;
            if y > 0.0 && 2.0 * u.ln() <= ln_h(y) {
                let y = if self.invert { 1.0 / y } else { y };
                return self.scale * y;
            }
        }
    }
}

/// Root of a function positive at `lo` and negative at `hi`.
fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = if hi / lo > 4.0 && lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
