//! Simulated critical values for the goodness-of-fit statistics.
//!
//! Replicate `b` draws all of its randomness from `substream(seed, [b])`, so
//! reports are identical for any number of workers.

use super::marginal::NullMarginal;
use super::stats::{statistic, GofReport, Provenance, StatKind};
use crate::marketdata::ReturnSeries;
use crate::par::map_indexed;
use crate::redf::Redf;
use crate::rng::{normal, substream};
use crate::sim::{simulate_variance, SvModelSpec};
use crate::spotvol::{estimate_spot_variance, SpotConfig};
use crate::{Error, Result};

/// Grid and replication settings shared by both procedures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapDesign {
    pub days: usize,
    /// Points per day at which simulated variance is sampled.
    pub steps_per_day: usize,
    pub b: usize,
    pub seed: u64,
}

impl BootstrapDesign {
    fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::invalid("B must be at least 1"));
        }
        if self.days == 0 || self.steps_per_day == 0 {
            return Err(Error::invalid("days and steps_per_day must be positive"));
        }
        Ok(())
    }
}

/// Statistics of `kinds` for each of `design.b` true-variance EDFs simulated
/// under `model`, against the model's own stationary law. Returned as one
/// vector per kind.
pub fn known_replicates(model: &SvModelSpec, design: &BootstrapDesign, kinds: &[StatKind]) -> Result<Vec<Vec<f64>>> {
    design.validate()?;
    let null = model.stationary_marginal()?;
    let horizon = design.days as f64;
    let dt = 1.0 / design.steps_per_day as f64;
    let rows = map_indexed(design.b, |b| -> Result<Vec<f64>> {
        let wrap = |e: Error| Error::Replicate { index: b, source: Box::new(e) };
        let v = simulate_variance(model, design.days, design.steps_per_day, substream(design.seed, &[b as u64]))
            .map_err(wrap)?;
        let redf = Redf::from_values(&v, dt).map_err(wrap)?;
        Ok(kinds.iter().map(|&k| statistic(k, &redf, &null, horizon).value).collect())
    });
    let mut out = vec![Vec::with_capacity(design.b); kinds.len()];
    for row in rows {
        for (col, v) in out.iter_mut().zip(row?) {
            col.push(v);
        }
    }
    Ok(out)
}

/// Procedure without parameter estimation: the null distribution of the
/// statistic is simulated from noise-free variance paths under `model`.
pub fn bootstrap_known(
    observed: &Redf,
    model: &SvModelSpec,
    design: &BootstrapDesign,
    kind: StatKind,
) -> Result<GofReport> {
    let null = model.stationary_marginal()?;
    let obs = statistic(kind, observed, &null, observed.horizon()).value;
    let reps = known_replicates(model, design, &[kind])?.remove(0);
    GofReport::new(kind, obs, reps, design.seed, Provenance::Fixed, null, 0)
}

/// Noisy returns `√(V_{i−1}Δ)·Φ₁ + ω(ε_i − ε_{i−1})`: a simulated variance
/// path on the sampling grid plus i.i.d. price-level noise of s.d. `omega`.
pub fn noisy_returns(model: &SvModelSpec, days: usize, n: usize, omega: f64, seed: u64, index: u64) -> Result<ReturnSeries> {
    if !(omega >= 0.0) {
        return Err(Error::domain("omega must be nonnegative"));
    }
    let v = simulate_variance(model, days, n, substream(seed, &[index, 0]))?;
    let mut rng = substream(seed, &[index, 1]);
    let delta = 1.0 / n as f64;
    let mut prev = omega * normal(&mut rng);
    let out = v
        .chunks(n)
        .map(|day| {
            day.iter()
                .map(|&vi| {
                    let eps = omega * normal(&mut rng);
                    let r = (vi * delta).sqrt() * normal(&mut rng) + eps - prev;
                    prev = eps;
                    r
                })
                .collect()
        })
        .collect();
    Ok(ReturnSeries { delta_n: delta, days: out })
}

/// Settings of the procedure with parameter estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedDesign {
    pub design: BootstrapDesign,
    /// Noise standard deviation used in the simulated prices.
    pub omega: f64,
    pub spot: SpotConfig,
}

/// Replicates of the procedure with parameter estimation. Each replicate
/// simulates noisy returns under `fitted`, runs the spot-variance pipeline,
/// re-estimates the parameters with `estimate`, and evaluates each statistic
/// of the replicate REDF against the re-estimated stationary law.
///
/// Returns one vector per kind plus the number of replicates dropped because
/// the pipeline or the re-estimation failed.
pub fn estimated_replicates<H>(
    fitted: &SvModelSpec,
    cfg: &EstimatedDesign,
    kinds: &[StatKind],
    estimate: H,
) -> Result<(Vec<Vec<f64>>, usize)>
where
    H: Fn(&ReturnSeries) -> Result<SvModelSpec> + Sync + Send,
{
    let d = cfg.design;
    d.validate()?;
    fitted.validate()?;
    let rows = map_indexed(d.b, |b| -> Option<Vec<f64>> {
        let run = || -> Result<Vec<f64>> {
            let returns = noisy_returns(fitted, d.days, d.steps_per_day, cfg.omega, d.seed, b as u64)?;
            let path = estimate_spot_variance(&returns, &cfg.spot)?;
            let redf = Redf::from_path(&path)?;
            let refit = estimate(&returns)?.stationary_marginal()?;
            Ok(kinds.iter().map(|&k| statistic(k, &redf, &refit, redf.horizon()).value).collect())
        };
        run().ok().filter(|v| v.iter().all(|x| x.is_finite()))
    });
    let dropped = rows.iter().filter(|r| r.is_none()).count();
    if dropped == d.b {
        return Err(Error::InsufficientData(format!("all {} replicates failed", d.b)));
    }
    let mut out = vec![Vec::with_capacity(d.b - dropped); kinds.len()];
    for row in rows.into_iter().flatten() {
        for (col, v) in out.iter_mut().zip(row) {
            col.push(v);
        }
    }
    Ok((out, dropped))
}

/// Procedure with parameter estimation, for one statistic. Replicates whose
/// pipeline or re-estimation fails are dropped and counted in the report.
///
/// `observed` is the statistic of the data against the law of `fitted`.
pub fn bootstrap_estimated<H>(
    observed: f64,
    fitted: &SvModelSpec,
    cfg: &EstimatedDesign,
    kind: StatKind,
    estimate: H,
) -> Result<GofReport>
where
    H: Fn(&ReturnSeries) -> Result<SvModelSpec> + Sync + Send,
{
    let null = fitted.stationary_marginal()?;
    let (mut reps, dropped) = estimated_replicates(fitted, cfg, &[kind], estimate)?;
    GofReport::new(kind, observed, reps.remove(0), cfg.design.seed, Provenance::Estimated, null, dropped)
}

/// Statistic of an observed REDF against a null law.
pub fn observed_statistic(redf: &Redf, null: &NullMarginal, kind: StatKind) -> f64 {
    statistic(kind, redf, null, redf.horizon()).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::with_jobs;

    fn small() -> BootstrapDesign {
        BootstrapDesign { days: 20, steps_per_day: 78, b: 24, seed: 5 }
    }

    #[test]
    fn known_is_reproducible_across_workers() {
        let m = SvModelSpec::heston_default();
        let a = with_jobs(Some(1), || known_replicates(&m, &small(), &[StatKind::Rks, StatKind::Cvm])).unwrap();
        let b = with_jobs(Some(4), || known_replicates(&m, &small(), &[StatKind::Rks, StatKind::Cvm])).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn single_replicate_report() {
        let m = SvModelSpec::heston_default();
        let mut d = small();
        d.b = 1;
        let v = simulate_variance(&m, 20, 78, substream(99, &[0])).unwrap();
        let redf = Redf::from_values(&v, 1.0 / 78.0).unwrap();
        let rep = bootstrap_known(&redf, &m, &d, StatKind::Rks).unwrap();
        assert_eq!(rep.critical_values.a05, rep.replicates[0]);
        assert!(rep.p_value == 0.5 || rep.p_value == 1.0);
        assert!(bootstrap_known(&redf, &m, &BootstrapDesign { b: 0, ..d }, StatKind::Rks).is_err());
    }

    #[test]
    fn noisy_returns_have_expected_variance() {
        let m = SvModelSpec::Heston { kappa: 5.0, v0: 1.0, xi: 0.01, rho: 0.0 };
        let omega = 0.01;
        let r = noisy_returns(&m, 4, 2340, omega, 3, 0).unwrap();
        let all: Vec<f64> = r.days.concat();
        let var = all.iter().map(|x| x * x).sum::<f64>() / all.len() as f64;
        let expect = 1.0 / 2340.0 + 2.0 * omega * omega;
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
        let ac = all.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (all.len() - 1) as f64;
        assert!((ac + omega * omega).abs() < 0.1 * omega * omega, "{ac}");
    }

    #[test]
    fn estimated_counts_failures() {
        let m = SvModelSpec::heston_default();
        let cfg = EstimatedDesign {
            design: BootstrapDesign { days: 2, steps_per_day: 2340, b: 6, seed: 1 },
            omega: 0.0,
            spot: SpotConfig::default(),
        };
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let rep = bootstrap_estimated(0.1, &m, &cfg, StatKind::Rks, |_| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst).is_multiple_of(2) {
                Err(Error::invalid("refit failed"))
            } else {
                Ok(SvModelSpec::heston_default())
            }
        })
        .unwrap();
        assert_eq!(rep.dropped + rep.b, 6);
        assert_eq!(rep.dropped, 3);
        assert!(!rep.flags.is_empty());
    }
}
