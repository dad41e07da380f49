//! End-to-end acceptance checks at desk scale, one line per criterion.
//!
//! `ACCEPTANCE_ONLY=2,5,7` runs a subset. The process exits nonzero when a
//! criterion fails, unless it is listed in `KNOWN_SHORTFALLS`: those are
//! reported as failures but do not fail the run.

use std::time::Instant;

use rand::Rng;
use statrs::function::gamma::gamma;

use volredf::calib::{calibrate_returns, daily_iv_series, gmm_fit, model_iv_moments, Family, GmmOptions};
use volredf::gof::{
    bootstrap_estimated, cvm, known_replicates, observed_statistic, pvalue, rks, statistic, BootstrapDesign, Cdf,
    EstimatedDesign, NullMarginal, StatKind,
};
use volredf::marketdata::ReturnSeries;
use volredf::par::{map_indexed, with_jobs};
use volredf::preavg::{psi_constants, preaverage_day, MinKernel, PreavgConfig};
use volredf::redf::{longrun_variance, LongRunConfig, Redf};
use volredf::rng::{derive_seed, normal, substream};
use volredf::sim::{
    assemble_panel, simulate_heston, simulate_tsou, simulate_ts_jumps, simulate_variance, Cir, JumpSpec, NoiseSpec,
    SvModelSpec,
};
use volredf::special::{integrate, integrate_to_infinity, ks_one_sample};
use volredf::spotvol::{estimate_spot_variance, noise_variance_day, raw_spot_variance, BlockRule, SpotConfig};

const SEED: u64 = 2718;
const KNOWN_SHORTFALLS: &[u32] = &[4, 5, 6];

const DAY_N: usize = 2340;
const FINE: usize = 23400;
const THETA: f64 = 1.0 / 3.0;
const GAMMA_NOISE: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Heston with TS jumps carrying 20% of quadratic variation.
fn design_jumps(mean_variance: f64) -> JumpSpec {
    JumpSpec::from_share(3.0, 0.5, 0.2, mean_variance).expect("valid jump design")
}

fn noise() -> NoiseSpec {
    NoiseSpec { gamma: GAMMA_NOISE }
}

fn c1_psi() -> Outcome {
    let g = |x: f64| x.min(1.0 - x);
    let psi2_ref = integrate(|x| g(x).powi(2), 0.0, 0.5, 1e-15, 1e-14) + integrate(|x| g(x).powi(2), 0.5, 1.0, 1e-15, 1e-14);
    // g' = 1 on (0, 1/2) and −1 on (1/2, 1).
    let psi1_ref = integrate(|_| 1.0, 0.0, 0.5, 1e-15, 1e-14) + integrate(|_| 1.0, 0.5, 1.0, 1e-15, 1e-14);
    let mut const_err = 0.0f64;
    let mut scaled = Vec::new();
    for k in 2..=256usize {
        let p = psi_constants(k, &MinKernel).expect("k >= 2");
        const_err = const_err
            .max((p.psi1 - 1.0).abs())
            .max((p.psi2 - 1.0 / 12.0).abs())
            .max((p.psi1 - psi1_ref).abs())
            .max((p.psi2 - psi2_ref).abs());
        scaled.push(k as f64 * (p.psi2_n - p.psi2).abs());
    }
    let head = scaled[..15].iter().cloned().fold(0.0, f64::max);
    let tail = scaled[127..].iter().cloned().fold(0.0, f64::max);
    let worst = scaled.iter().cloned().fold(0.0, f64::max);
    let pass = const_err <= 1e-12 && worst <= 0.1 && tail <= head;
    outcome(pass, format!("max |ψ - exact| = {const_err:.1e}; max k|ψ2ⁿ-ψ2| = {worst:.3e} (k ≤ 16: {head:.2e}, k > 128: {tail:.2e})"))
}

/// Returns with σ² = 1 and i.i.d. noise of variance ω² = γ²Δ.
fn constant_vol_returns(n: usize, days: usize, omega2: f64, seed: u64) -> ReturnSeries {
    let mut rng = substream(seed, &[]);
    let delta = 1.0 / n as f64;
    let (sd, om) = (delta.sqrt(), omega2.sqrt());
    let mut prev = om * normal(&mut rng);
    let days = (0..days)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let u = om * normal(&mut rng);
                    let r = sd * normal(&mut rng) + u - prev;
                    prev = u;
                    r
                })
                .collect()
        })
        .collect();
    ReturnSeries { delta_n: delta, days }
}

fn c2_spot_limit() -> Outcome {
    let (psi1, psi2) = (1.0, 1.0 / 12.0);
    let mut medians = Vec::new();
    for (g, &n) in [585usize, 2340, 9360].iter().enumerate() {
        let delta = 1.0 / n as f64;
        let omega2 = GAMMA_NOISE * GAMMA_NOISE * delta;
        let target = THETA * psi2 + psi1 * omega2 / THETA;
        let cfg = PreavgConfig::new(delta, THETA).expect("config");
        let h = BlockRule::default().resolve(delta, cfg.k_n).expect("block");
        let w = cfg.weights();
        let mut errs = Vec::new();
        let mut day = 0u64;
        while errs.len() < 200 {
            let r = constant_vol_returns(n, 1, omega2, derive_seed(SEED, &[2, g as u64, day]));
            day += 1;
            let pre = preaverage_day(&r.days[0], &w);
            let vt = raw_spot_variance(&pre, f64::INFINITY, h, delta).expect("raw spot variance");
            for start in (0..vt.len()).step_by(h) {
                if errs.len() < 200 {
                    errs.push((vt[start] - target).abs());
                }
            }
        }
        errs.sort_by(f64::total_cmp);
        medians.push(0.5 * (errs[99] + errs[100]));
    }
    let pass = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(pass, format!("median |Ṽ - limit| at n = 585, 2340, 9360: {:.4} > {:.4} > {:.4}", medians[0], medians[1], medians[2]))
}

fn c3_noise_variance() -> Outcome {
    let omega2: f64 = 1e-4;
    let cfg = PreavgConfig::new(1.0 / DAY_N as f64, THETA).expect("config");
    let len = BlockRule::default().resolve(cfg.delta_n, cfg.k_n).expect("block") + cfg.k_n;
    let per_day = DAY_N / len;
    let mut rng = substream(SEED, &[3]);
    let om = omega2.sqrt();
    let mut est = Vec::new();
    while est.len() < 1000 {
        let mut prev = om * normal(&mut rng);
        let r: Vec<f64> = (0..DAY_N)
            .map(|_| {
                let u = om * normal(&mut rng);
                let d = u - prev;
                prev = u;
                d
            })
            .collect();
        let all = noise_variance_day(&r, len, (per_day - 1) * len + 1).expect("noise blocks");
        est.extend((0..per_day).map(|b| all[b * len]).take(1000 - est.len()));
    }
    let m = mean(&est);
    let se = (sample_var(&est) / est.len() as f64).sqrt();
    let z = (m - omega2) / se;
    outcome(z.abs() <= 3.0, format!("mean ω̂² = {m:.6e} vs ω² = {omega2:.1e}, s.e. {se:.2e}, z = {z:.2}"))
}

fn c4_quantile_bias() -> Outcome {
    let model = SvModelSpec::heston_default();
    let jumps = design_jumps(model.mean_variance());
    let alphas: Vec<f64> = (5..=15).map(|i| i as f64 * 0.05).collect();
    let reps = 300;
    let spot = SpotConfig::default();
    let run = |jump: Option<&JumpSpec>| {
        let rows = map_indexed(reps, |r| {
            let p = assemble_panel(&model, jump, &noise(), 1, FINE, DAY_N, derive_seed(SEED, &[4, r as u64]))
                .expect("panel");
            let est = Redf::from_path(&estimate_spot_variance(&p.returns().expect("returns"), &spot).expect("spot"))
                .expect("redf");
            let truth = p.true_redf().expect("true redf");
            alphas
                .iter()
                .map(|&a| est.quantile(a).expect("level") / truth.quantile(a).expect("level") - 1.0)
                .collect::<Vec<f64>>()
        });
        let bias: Vec<f64> = (0..alphas.len()).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / reps as f64).collect();
        let avg = bias.iter().map(|b| b.abs()).sum::<f64>() / bias.len() as f64;
        (avg, bias)
    };
    let (avg, bias) = run(Some(&jumps));
    // Same panels without the jump component, as a diagnostic.
    let (avg_cont, _) = run(None);
    outcome(
        avg <= 0.05,
        format!(
            "mean |Q_n/Q_T - 1| over α in [0.25, 0.75] = {avg:.4} (bias at 0.25 / 0.50 / 0.75: {:+.3} / {:+.3} / {:+.3}; without jumps {avg_cont:.4})",
            bias[0], bias[5], bias[10]
        ),
    )
}

fn heston_cir() -> (Cir, f64) {
    let cir = Cir::new(0.05, 1.0, 0.2).expect("cir");
    let x = cir.stationary().quantile(0.5).expect("median");
    (cir, x)
}

fn c5_clt_pivot() -> Outcome {
    let model = SvModelSpec::heston_default();
    let jumps = design_jumps(model.mean_variance());
    let days = 50;
    let (cir, x) = heston_cir();
    let sigma_t = cir.sigma_finite(x, days as f64);
    let sigma = cir.sigma(x);
    let spot = SpotConfig::default();
    let reps = 300;
    let f_hat = |jump: Option<&JumpSpec>| {
        map_indexed(reps, |r| {
            let p = assemble_panel(&model, jump, &noise(), days, FINE, DAY_N, derive_seed(SEED, &[5, r as u64]))
                .expect("panel");
            let path = estimate_spot_variance(&p.returns().expect("returns"), &spot).expect("spot");
            Redf::from_path(&path).expect("redf").cdf(x)
        })
    };
    let pivot = |f: &[f64], s: f64| -> Vec<f64> { f.iter().map(|f| (days as f64).sqrt() * (f - 0.5) / s.sqrt()).collect() };
    let with_jumps = f_hat(Some(&jumps));
    let z = pivot(&with_jumps, sigma_t);
    let (m, v) = (mean(&z), sample_var(&z));
    let za = pivot(&with_jumps, sigma);
    let zc = pivot(&f_hat(None), sigma_t);
    let pass = (-0.3..=0.3).contains(&m) && (0.6..=1.4).contains(&v);
    outcome(
        pass,
        format!(
            "pivot mean {m:+.3}, variance {v:.3} with Σ_T = {sigma_t:.4} (asymptotic Σ = {sigma:.4}: {:+.3}, {:.3}; without jumps: {:+.3}, {:.3})",
            mean(&za),
            sample_var(&za),
            mean(&zc),
            sample_var(&zc)
        ),
    )
}

fn c6_sigma_estimator() -> Outcome {
    let model = SvModelSpec::heston_default();
    let days = 500;
    let (cir, x) = heston_cir();
    let sigma = cir.sigma(x);
    let cfg = LongRunConfig::default();
    let v = simulate_variance(&model, days, DAY_N, substream(SEED, &[6])).expect("variance path");
    let delta = 1.0 / DAY_N as f64;
    let est = longrun_variance(&v, delta, x, &cfg).expect("long-run variance");
    let window = est.lag_cells as f64 * delta;
    // What the tapered window estimates in expectation.
    let windowed = cir.sigma_finite(x, window);
    let rel = est.value / sigma - 1.0;
    outcome(
        rel.abs() <= 0.25,
        format!(
            "Σ_n,T = {:.4} vs Σ = {sigma:.4} ({:+.1}%); lag window {window:.2} days, whose tapered oracle is {windowed:.4}",
            est.value,
            100.0 * rel
        ),
    )
}

/// Rejection rates of procedure I at 5% (rKS, rL²), shared across criteria.
fn size_study() -> [f64; 2] {
    let model = SvModelSpec::heston_default();
    let jumps = design_jumps(model.mean_variance());
    let null = model.stationary_marginal().expect("null");
    let days = 250;
    let design = BootstrapDesign { days, steps_per_day: DAY_N, b: 200, seed: derive_seed(SEED, &[7, 0]) };
    let kinds = [StatKind::Rks, StatKind::Cvm];
    let reps = known_replicates(&model, &design, &kinds).expect("replicates");
    let spot = SpotConfig::default();
    let trials = 150;
    let rejects = map_indexed(trials, |t| {
        let p = assemble_panel(&model, Some(&jumps), &noise(), days, FINE, DAY_N, derive_seed(SEED, &[7, 1, t as u64]))
            .expect("panel");
        let redf = Redf::from_path(&estimate_spot_variance(&p.returns().expect("returns"), &spot).expect("spot"))
            .expect("redf");
        let mut out = [false; 2];
        for (i, &k) in kinds.iter().enumerate() {
            let obs = statistic(k, &redf, &null, redf.horizon()).value;
            out[i] = pvalue(obs, &reps[i]).expect("p-value") <= 0.05;
        }
        out
    });
    let rate = |i: usize| rejects.iter().filter(|r| r[i]).count() as f64 / trials as f64;
    [rate(0), rate(1)]
}

fn c7_size(size: [f64; 2]) -> Outcome {
    let ok = |r: f64| (0.01..=0.11).contains(&r);
    outcome(ok(size[0]) && ok(size[1]), format!("rejection at 5%: rKS {:.3}, rL² {:.3} (150 trials, B = 200)", size[0], size[1]))
}

fn c8_power(size: Option<[f64; 2]>) -> Outcome {
    let data_model = SvModelSpec::expou_default();
    let jumps = design_jumps(data_model.mean_variance());
    let days = 250;
    let spot = SpotConfig::default();
    let pcfg = PreavgConfig::new(1.0 / DAY_N as f64, THETA).expect("config");
    let options = GmmOptions::default();
    let trials = 100;
    let results = map_indexed(trials, |t| -> Option<bool> {
        let p = assemble_panel(&data_model, Some(&jumps), &noise(), days, FINE, DAY_N, derive_seed(SEED, &[8, t as u64]))
            .ok()?;
        let returns = p.returns().ok()?;
        let path = estimate_spot_variance(&returns, &spot).ok()?;
        let redf = Redf::from_path(&path).ok()?;
        let iv_mean = mean(&daily_iv_series(&returns, &pcfg).ok()?);
        let fitted = calibrate_returns(&returns, &Family::Heston.default_start(iv_mean), &pcfg, &options).ok()?.params;
        let mut om: Vec<f64> = path.omega2_hat.iter().flatten().copied().collect();
        om.sort_by(f64::total_cmp);
        let omega = om[om.len() / 2].max(0.0).sqrt();
        let observed = observed_statistic(&redf, &fitted.stationary_marginal().ok()?, StatKind::Rks);
        let cfg = EstimatedDesign {
            design: BootstrapDesign { days, steps_per_day: DAY_N, b: 200, seed: derive_seed(SEED, &[8, t as u64, 1]) },
            omega,
            spot,
        };
        let report = bootstrap_estimated(observed, &fitted, &cfg, StatKind::Rks, |r| {
            calibrate_returns(r, &fitted, &pcfg, &options).map(|f| f.params)
        })
        .ok()?;
        Some(report.rejects(0.05))
    });
    let failed = results.iter().filter(|r| r.is_none()).count();
    let done: Vec<bool> = results.into_iter().flatten().collect();
    let rate = done.iter().filter(|&&r| r).count() as f64 / done.len().max(1) as f64;
    let (reference, source) = match size {
        Some(s) => (s[0], "criterion 7 rKS size"),
        None => (0.05, "nominal level, criterion 7 not run"),
    };
    let pass = !done.is_empty() && rate > reference && rate >= 0.15;
    outcome(pass, format!("rKS rejection {rate:.3} over {} trials ({failed} failed) vs {source} {reference:.3}", done.len()))
}

fn c9_stationary_laws() -> Outcome {
    let spd = 100;
    let days = 2000;
    let every = 60;
    let heston = SvModelSpec::heston_default();
    let tsou = SvModelSpec::Tsou { kappa: 0.05, c: 1.0, lambda: std::f64::consts::PI, beta: 0.5 };
    let mut ps = Vec::new();
    for (i, (spec, path)) in [
        (heston, simulate_heston(&heston, days, spd, derive_seed(SEED, &[9, 0])).expect("heston")),
        (tsou, simulate_tsou(&tsou, days, spd, derive_seed(SEED, &[9, 1])).expect("tsou")),
    ]
    .into_iter()
    .enumerate()
    {
        let law = spec.stationary_marginal().expect("law");
        let sample: Vec<f64> = (1..=days / every).map(|d| path.v[d * every * spd]).collect();
        let (_, p) = ks_one_sample(&sample, |x| law.cdf(x));
        ps.push((i, p, sample.len()));
    }
    let pass = ps.iter().all(|&(_, p, _)| p > 0.01);
    outcome(pass, format!("KS p-values: Heston vs Gamma(2.5, 2.5) {:.3}, TS-OU vs IG {:.3} ({} points each)", ps[0].1, ps[1].1, ps[0].2))
}

fn c10_jumps() -> Outcome {
    let (lambda, r, share) = (3.0, 0.5, 0.2);
    let js = JumpSpec::from_share(lambda, r, share, 1.0).expect("jump design");
    let days = 200;
    let path = simulate_ts_jumps(&js, days, DAY_N, derive_seed(SEED, &[10])).expect("jumps");
    let qv = path.j.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / days as f64;
    let target = 2.0 * js.c * gamma(2.0 - r) * lambda.powf(r - 2.0);
    let qv_rel = qv / target - 1.0;
    // Root of the jump share in c, with the second moment by quadrature.
    let m2 = 2.0 * integrate_to_infinity(|x| x.powf(1.0 - r) * (-lambda * x).exp(), 0.0, 1e-14, 1e-13);
    let share_of = |c: f64| c * m2 / (c * m2 + 1.0);
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share_of(mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let c_rel = js.c / root - 1.0;
    let pass = qv_rel.abs() <= 0.05 && c_rel.abs() <= 0.01;
    outcome(
        pass,
        format!("jump QV/day {qv:.4} vs {target:.4} ({:+.2}%); c = {:.6} vs root {root:.6} ({:+.1e})", 100.0 * qv_rel, js.c, c_rel),
    )
}

fn params(s: &SvModelSpec) -> [f64; 3] {
    match *s {
        SvModelSpec::Heston { kappa, v0, xi, .. } | SvModelSpec::Expou { kappa, v0, xi, .. } => [kappa, v0, xi],
        SvModelSpec::Tsou { kappa, c, lambda, .. } => [kappa, c, lambda],
    }
}

fn c11_gmm() -> Outcome {
    let truths = [
        SvModelSpec::heston_default(),
        SvModelSpec::expou_default(),
        SvModelSpec::Tsou { kappa: 0.05, c: 1.0, lambda: std::f64::consts::PI, beta: 0.5 },
    ];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for truth in truths {
        let m = model_iv_moments(&truth).expect("moments");
        match gmm_fit(&m, &Family::of(&truth).default_start(m.mean), &GmmOptions::default()) {
            Ok(fit) => {
                for (a, b) in params(&truth).iter().zip(params(&fit.params)) {
                    worst = worst.max((a - b).abs());
                }
            }
            Err(e) => failures.push(format!("{}: {e}", truth.family())),
        }
    }
    let pass = failures.is_empty() && worst <= 1e-6;
    outcome(pass, format!("max parameter error {worst:.2e} over Heston, exp-OU, TS-OU{}", if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }))
}

/// A step function used as its own null law.
struct Step<'a>(&'a Redf);

impl Cdf for Step<'_> {
    fn cdf(&self, x: f64) -> f64 {
        self.0.cdf(x)
    }
    fn left_limit(&self, x: f64) -> f64 {
        let i = self.0.support().partition_point(|&v| v < x);
        if i == 0 {
            0.0
        } else {
            self.0.value_at_atom(i - 1)
        }
    }
    fn is_continuous(&self) -> bool {
        false
    }
}

fn c12_properties() -> Outcome {
    let mut rng = substream(SEED, &[12]);
    let null = NullMarginal::Gamma { shape: 2.5, rate: 2.5 };
    let mut problems: Vec<String> = Vec::new();
    let mut note = |ok: bool, what: &str| {
        if !ok && problems.len() < 5 {
            problems.push(what.to_string());
        }
    };
    for case in 0..10_000 {
        let len = rng.random_range(1..60);
        // Coarse rounding produces ties.
        let values: Vec<f64> = (0..len)
            .map(|_| {
                let v: f64 = rng.random_range(0.0..3.0);
                if case % 2 == 0 { (v * 4.0).round() / 4.0 } else { v }
            })
            .collect();
        let delta = rng.random_range(0.001..1.0);
        let f = Redf::from_values(&values, delta).expect("redf");
        let s = f.support();
        let (lo, hi) = (s[0], s[s.len() - 1]);
        note(f.cdf(lo - 1e-9) == 0.0 && f.cdf(f64::NEG_INFINITY) == 0.0, "left limit");
        note(f.cdf(hi) == 1.0 && f.cdf(f64::INFINITY) == 1.0, "right limit");
        note((f.horizon() - len as f64 * delta).abs() < 1e-12 * f.horizon().max(1.0), "horizon");
        for i in 0..s.len() {
            // Right-continuous with the stated left limits.
            note(f.cdf(s[i]) == f.value_at_atom(i), "right continuity");
            let below = if i == 0 { lo - 1.0 } else { 0.5 * (s[i - 1] + s[i]) };
            note(f.cdf(below) == f.left_limit_at_atom(i), "left limit at atom");
            if i > 0 {
                note(f.value_at_atom(i) > f.value_at_atom(i - 1), "monotone");
            }
            let count = values.iter().filter(|&&v| v <= s[i]).count();
            note(f.value_at_atom(i) == count as f64 / len as f64, "occupation time");
        }
        for _ in 0..4 {
            let a: f64 = rng.random_range(1e-6..1.0 - 1e-6);
            let x: f64 = rng.random_range(lo - 0.5..hi + 0.5);
            let q = f.quantile(a).expect("level");
            note((q <= x) == (a <= f.cdf(x)), "Galois connection");
        }
        let t = f.horizon();
        note(rks(&f, &null, t) >= 0.0 && cvm(&f, &null, t) >= 0.0, "nonnegative");
        note(rks(&f, &Step(&f), t) == 0.0, "rKS zero on match");
        if s.len() > 1 {
            let shifted: Vec<f64> = values.iter().map(|v| if *v == hi { v + 1.0 } else { *v }).collect();
            let g = Redf::from_values(&shifted, delta).expect("redf");
            note(rks(&f, &Step(&g), t) > 0.0 || f == g, "rKS positive on mismatch");
        }
    }
    // rL² against a continuous law: the quantile-midpoint path attains the
    // discretization floor T/(12N²) and any other path lies above it.
    for n in [10usize, 100, 1000] {
        let atoms: Vec<f64> = (0..n).map(|i| null.quantile((i as f64 + 0.5) / n as f64).expect("quantile")).collect();
        let f = Redf::from_values(&atoms, 1.0).expect("redf");
        let floor = 1.0 / (12.0 * (n * n) as f64);
        note((cvm(&f, &null, 1.0) - floor).abs() <= 1e-9 * floor.max(1e-6), "rL² floor at match");
        let moved: Vec<f64> = atoms.iter().map(|a| a * 1.05).collect();
        note(cvm(&Redf::from_values(&moved, 1.0).expect("redf"), &null, 1.0) > floor, "rL² above floor on mismatch");
    }
    // Bit-identical bootstrap output for 1 and 8 workers.
    let model = SvModelSpec::heston_default();
    let design = BootstrapDesign { days: 30, steps_per_day: 78, b: 40, seed: derive_seed(SEED, &[12, 1]) };
    let kinds = [StatKind::Rks, StatKind::Cvm, StatKind::Ad];
    let one = with_jobs(Some(1), || known_replicates(&model, &design, &kinds)).expect("replicates");
    let eight = with_jobs(Some(8), || known_replicates(&model, &design, &kinds)).expect("replicates");
    let bits = |v: &Vec<Vec<f64>>| v.iter().flatten().map(|x| x.to_bits()).collect::<Vec<u64>>();
    note(bits(&one) == bits(&eight), "procedure I reproducibility");
    let spot = SpotConfig::default();
    let pcfg = PreavgConfig::new(1.0 / 390.0, THETA).expect("config");
    let est = EstimatedDesign {
        design: BootstrapDesign { days: 20, steps_per_day: 390, b: 12, seed: derive_seed(SEED, &[12, 2]) },
        omega: 1e-3,
        spot,
    };
    let run = || {
        bootstrap_estimated(0.5, &model, &est, StatKind::Rks, |r| {
            calibrate_returns(r, &model, &pcfg, &GmmOptions::default()).map(|f| f.params)
        })
    };
    let a = with_jobs(Some(1), run);
    let b = with_jobs(Some(8), run);
    let same = match (&a, &b) {
        (Ok(x), Ok(y)) => {
            x.replicates.iter().map(|v| v.to_bits()).eq(y.replicates.iter().map(|v| v.to_bits())) && x.dropped == y.dropped
        }
        _ => false,
    };
    note(same, "procedure II reproducibility");
    let pass = problems.is_empty();
    outcome(
        pass,
        if pass {
            "10⁴ random paths: limits, càdlàg, monotone, Galois, rKS/rL² zero/positivity; bootstrap bits equal for 1 and 8 jobs".into()
        } else {
            format!("violations: {}", problems.join(", "))
        },
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let names = [
        "psi constants",
        "spot variance limit",
        "noise variance",
        "quantile bias",
        "CLT pivot",
        "long-run variance",
        "size",
        "power",
        "stationary laws",
        "jump moments",
        "GMM round trip",
        "properties",
    ];
    let mut size = None;
    let mut hard_failures = Vec::new();
    let mut tally = (0, 0);
    for id in 1..=12u32 {
        if !wanted(id) {
            continue;
        }
        let start = Instant::now();
        let out = match id {
            1 => c1_psi(),
            2 => c2_spot_limit(),
            3 => c3_noise_variance(),
            4 => c4_quantile_bias(),
            5 => c5_clt_pivot(),
            6 => c6_sigma_estimator(),
            7 => {
                let s = size_study();
                size = Some(s);
                c7_size(s)
            }
            8 => c8_power(size),
            9 => c9_stationary_laws(),
            10 => c10_jumps(),
            11 => c11_gmm(),
            _ => c12_properties(),
        };
        let label = if out.pass {
            tally.0 += 1;
            "PASS"
        } else if KNOWN_SHORTFALLS.contains(&id) {
            tally.1 += 1;
            "FAIL (known shortfall)"
        } else {
            tally.1 += 1;
            hard_failures.push(id);
            "FAIL"
        };
        println!(
            "criterion {id:>2} {label:<22} {:<20} {}  [{:.1} s]",
            names[id as usize - 1],
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {} failed", tally.0, tally.1);
    if !hard_failures.is_empty() {
        eprintln!("unexpected failures: {hard_failures:?}");
        std::process::exit(1);
    }
}
