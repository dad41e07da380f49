//! Samplers for tempered stable laws.
//!
//! A one-sided tempered stable (TS) process has Lévy density
//! `c·e^{−λx}·x^{−1−r}` on `x > 0`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use statrs::function::gamma::{gamma, gamma_lr};
use std::f64::consts::PI;

use crate::special::integrate_to_infinity;
use crate::{Error, Result};

/// Positive `alpha`-stable variate with Laplace transform `exp(−s^alpha)`,
/// `0 < alpha < 1` (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// Inverse Gaussian variate with mean `mu` and shape `nu`.
///
/// Michael–Schucany–Haas, with the root rearranged so that very small
/// shapes (as in short-step OU innovations) do not cancel catastrophically.
pub fn inverse_gaussian<R: Rng + ?Sized>(mu: f64, nu: f64, rng: &mut R) -> f64 {
    let z = crate::rng::normal(rng);
    let y = mu * z * z;
    let x = mu - 2.0 * mu * y / (y + (y * y + 4.0 * nu * y).sqrt());
    let x = if x.is_finite() && x > 0.0 { x } else { f64::MIN_POSITIVE };
    if rng.random::<f64>() * (mu + x) <= mu {
        x
    } else {
        mu * mu / x
    }
}

/// Increment sampler for a symmetric TS process: the difference of two
/// independent one-sided TS processes with the same `(c, λ, r)`.
///
/// For `r < 1` increments are exact: stable proposals are accepted with
/// probability `e^{−λY}`. For `1 ≤ r < 2` the one-sided processes have
/// infinite variation and the increment is approximated by a Gaussian for
/// jumps below `eps` plus exact compound Poisson jumps above it.
#[derive(Debug, Clone)]
pub struct SymmetricTs {
    c: f64,
    lambda: f64,
    r: f64,
    dt: f64,
    mode: Mode,
    pub proposals: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone)]
enum Mode {
    Gamma(Gamma<f64>),
    Stable { scale: f64 },
    Truncated { eps: f64, rate: Poisson<f64>, small_sd: f64 },
}

impl SymmetricTs {
    pub fn new(c: f64, lambda: f64, r: f64, dt: f64) -> Result<Self> {
        if !(c > 0.0 && lambda > 0.0 && dt > 0.0) {
            return Err(Error::domain("c, lambda and dt must be positive"));
        }
        if !(0.0..2.0).contains(&r) {
            return Err(Error::domain("r must lie in [0, 2)"));
        }
        let mode = if r == 0.0 {
            Mode::Gamma(Gamma::new(c * dt, 1.0 / lambda).map_err(|e| Error::domain(e.to_string()))?)
        } else if r < 1.0 {
            Mode::Stable { scale: (dt * c * gamma(1.0 - r) / r).powf(1.0 / r) }
        } else {
            // Threshold chosen so that the untempered big-jump rate is about
            // 2000 per unit time on each side.
            let eps = (c / (r * 2000.0)).powf(1.0 / r);
            let big = c * integrate_to_infinity(|x| (-lambda * x).exp() * x.powf(-1.0 - r), eps, 1e-12, 1e-10);
            let small_var = c * gamma(2.0 - r) * gamma_lr(2.0 - r, lambda * eps) / lambda.powf(2.0 - r);
            Mode::Truncated {
                eps,
                rate: Poisson::new(2.0 * big * dt).map_err(|e| Error::domain(e.to_string()))?,
                small_sd: (2.0 * small_var * dt).sqrt(),
            }
        };
        Ok(Self { c, lambda, r, dt, mode, proposals: 0, accepted: 0 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Quadratic variation per unit time, `2cΓ(2−r)λ^{r−2}`.
    pub fn qv_rate(&self) -> f64 {
        2.0 * self.c * gamma(2.0 - self.r) * self.lambda.powf(self.r - 2.0)
    }

    fn one_sided<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match &self.mode {
            Mode::Gamma(g) => g.sample(rng),
            Mode::Stable { scale } => {
                let scale = *scale;
                loop {
                    self.proposals += 1;
                    let y = scale * positive_stable(self.r, rng);
                    if rng.random::<f64>() <= (-self.lambda * y).exp() {
                        self.accepted += 1;
                        return y;
                    }
                }
            }
            Mode::Truncated { .. } => unreachable!("truncated mode samples both sides jointly"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        if let Mode::Truncated { eps, rate, small_sd } = &self.mode {
            let (eps, small_sd) = (*eps, *small_sd);
            let count = rate.sample(rng) as u64;
            let mut x = small_sd * crate::rng::normal(rng);
            for _ in 0..count {
                let jump = loop {
                    self.proposals += 1;
                    let p = eps * rng.random::<f64>().powf(-1.0 / self.r);
                    if rng.random::<f64>() <= (-self.lambda * (p - eps)).exp() {
                        self.accepted += 1;
                        break p;
                    }
                };
                x += if rng.random::<bool>() { jump } else { -jump };
            }
            return x;
        }
        self.one_sided(rng) - self.one_sided(rng)
    }
}

/// Exact one-step innovation of the OU process `dV = −κV dt + dL` whose
/// stationary law is TS(c, λ, 1/2), i.e. inverse Gaussian.
///
/// Over a step `dt`, `V' = e^{−κdt}V + η` where `η` has Lévy density
/// `c·x^{−3/2}(e^{−λx} − e^{−κdt/2}e^{−λe^{κdt}x})`. That splits into a
/// TS(c(1−e^{−κdt/2}), λ, 1/2) law, sampled as an inverse Gaussian, and a
/// finite-activity compound Poisson part.
#[derive(Debug, Clone)]
pub struct TsOuInnovation {
    ig_mu: f64,
    ig_nu: f64,
    a: f64,
    count: Poisson<f64>,
    size: Gamma<f64>,
    pub decay: f64,
}

impl TsOuInnovation {
    pub fn new(kappa: f64, c: f64, lambda: f64, dt: f64) -> Result<Self> {
        if !(kappa > 0.0 && c > 0.0 && lambda > 0.0 && dt > 0.0) {
            return Err(Error::domain("kappa, c, lambda and dt must be positive"));
        }
        let half = (-0.5 * kappa * dt).exp();
        let c1 = c * (-(-0.5 * kappa * dt).exp_m1());
        let a = lambda * (kappa * dt).exp_m1();
        let mass = c * half * 2.0 * PI.sqrt() * ((lambda + a).sqrt() - lambda.sqrt());
        Ok(Self {
            ig_mu: c1 * (PI / lambda).sqrt(),
            ig_nu: 2.0 * PI * c1 * c1,
            a,
            count: Poisson::new(mass).map_err(|e| Error::domain(e.to_string()))?,
            size: Gamma::new(0.5, 1.0 / lambda).map_err(|e| Error::domain(e.to_string()))?,
            decay: (-kappa * dt).exp(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut eta = inverse_gaussian(self.ig_mu, self.ig_nu, rng);
        let n = self.count.sample(rng) as u64;
        for _ in 0..n {
            // Gamma(1/2, λ) proposal thinned by (1 − e^{−ax})/(ax).
            loop {
                let x = self.size.sample(rng);
                let ax = self.a * x;
                let accept = if ax < 1e-8 { 1.0 - 0.5 * ax } else { -(-ax).exp_m1() / ax };
                if rng.random::<f64>() <= accept {
                    eta += x;
                    break;
                }
            }
        }
        eta
    }
}
