//! Monte Carlo experiments: REDF accuracy, the CLT pivot, size and power of
//! the goodness-of-fit tests, and an empirical check over model families.
//!
//! Every replication draws from `derive_seed(seed, [rep])`, so any subset of
//! replications can be rerun alone.

use std::path::{Path, PathBuf};

use serde::Serialize;
use volredf::calib::{daily_iv_series, gmm_fit, Family, IvMoments};
use volredf::gof::{estimated_replicates, known_replicates, statistic, BootstrapDesign, EstimatedDesign, GofReport, Provenance as Procedure, StatKind};
use volredf::marketdata::ReturnSeries;
use volredf::par::map_indexed;
use volredf::preavg::PreavgConfig;
use volredf::redf::{standard_levels, Redf};
use volredf::rng::derive_seed;
use volredf::sim::{assemble_panel, Cir, SvModelSpec};
use volredf::spotvol::SpotVariancePath;

use crate::commands::{median_noise_sd, Globals};
use crate::config::{resolve_design, resolve_model, resolve_spot, Design, DesignArgs, ModelArgs, SpotArgs, SpotSettings};
use crate::output::{num, write_json, write_table, Dest, Provenance};
use crate::{input, CliError};

pub struct Request {
    pub kind: Option<String>,
    pub replications: Option<usize>,
    pub trials: Option<usize>,
    pub b: Option<usize>,
    pub model: ModelArgs,
    pub design: DesignArgs,
    pub spot: SpotArgs,
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
}

#[derive(Serialize)]
struct Failure {
    replication: usize,
    error: String,
}

#[derive(Serialize)]
struct Manifest {
    requested: usize,
    completed: usize,
    failed: Vec<Failure>,
}

/// Records failed replications; an experiment with failures still writes
/// its outputs and then exits with the partial-failure code.
fn finish<S: Serialize>(g: &Globals, prov: &Provenance, settings: &S, total: usize, failed: Vec<Failure>) -> Result<(), CliError> {
    let manifest = Manifest { requested: total, completed: total - failed.len(), failed };
    let dest = Dest::File(g.out_dir.join("manifest.json"));
    write_json(&dest, prov, settings, &manifest)?;
    eprintln!("volredf: wrote {}", dest.describe());
    if manifest.failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial { failed: manifest.failed.len(), total })
    }
}

fn written(dest: &Dest) {
    eprintln!("volredf: wrote {}", dest.describe());
}

pub fn run(g: &Globals, req: Request) -> Result<(), CliError> {
    let ex = g.file.experiment();
    let kind = req.kind.clone().or(ex.kind.clone()).ok_or_else(|| CliError::Config("--kind is required".into()))?;
    let seed = g.seed(req.seed);
    let spot = resolve_spot(&req.spot, &g.file)?;
    match kind.as_str() {
        "redf-accuracy" => {
            let reps = count(req.replications.or(ex.replications), 100, "--replications")?;
            let model = resolve_model(&req.model, g.file.model)?;
            let design = resolve_design(&req.design, &g.file, &model, 250)?;
            redf_accuracy(g, model, design, spot, reps, seed)
        }
        "clt-pivot" => {
            let reps = count(req.replications.or(ex.replications), 300, "--replications")?;
            let model = resolve_model(&req.model, g.file.model)?;
            if model.family() != "heston" {
                return Err(CliError::Config("clt-pivot needs the heston family, whose long-run variance is known".into()));
            }
            let design = resolve_design(&req.design, &g.file, &model, 50)?;
            let levels = ex.levels.clone().unwrap_or_else(|| vec![0.10, 0.25, 0.50, 0.75, 0.90]);
            clt_pivot(g, model, design, spot, &levels, reps, seed)
        }
        "size-power" => {
            let trials = count(req.trials.or(ex.trials), 150, "--trials")?;
            let b = count(req.b.or(g.file.bootstrap().b), 200, "-B")?;
            let null = resolve_model(&req.model, g.file.model)?;
            let data = g.file.alt_model.unwrap_or(null);
            data.validate()?;
            let design = resolve_design(&req.design, &g.file, &data, 250)?;
            let procedures = ex.procedures.clone().unwrap_or_else(|| vec!["known".into()]);
            for p in &procedures {
                if p != "known" && p != "estimated" {
                    return Err(CliError::Config(format!("unknown procedure '{p}' (known or estimated)")));
                }
            }
            let alpha = ex.alpha.unwrap_or(0.05);
            size_power(g, SizePower { null, data, design, spot, trials, b, seed, procedures, alpha })
        }
        "empirical" => {
            let input = req.input.clone().or(ex.input.clone()).ok_or_else(|| CliError::Config("empirical needs --input".into()))?;
            let b = count(req.b.or(g.file.bootstrap().b), 200, "-B")?;
            empirical(g, &input, spot, b, seed)
        }
        other => Err(CliError::Config(format!("unknown experiment '{other}' (redf-accuracy, clt-pivot, size-power, empirical)"))),
    }
}

fn count(v: Option<usize>, default: usize, name: &str) -> Result<usize, CliError> {
    match v.unwrap_or(default) {
        0 => Err(CliError::Config(format!("{name} must be at least 1"))),
        n => Ok(n),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0)
}

fn simulate_path(model: &SvModelSpec, design: &Design, spot: &SpotSettings, seed: u64) -> Result<(volredf::sim::SimulatedPanel, ReturnSeries, SpotVariancePath), CliError> {
    let panel = assemble_panel(model, design.jumps.as_ref(), &design.noise, design.days, design.fine_steps, design.n, seed)?;
    let returns = panel.returns()?;
    let path = input::spot_path(&returns, spot)?;
    Ok((panel, returns, path))
}

fn split<T>(results: Vec<Result<T, CliError>>) -> (Vec<(usize, T)>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(e) => failed.push(Failure { replication: i, error: e.to_string() }),
        }
    }
    (ok, failed)
}

#[derive(Serialize)]
struct McSettings {
    kind: &'static str,
    model: SvModelSpec,
    design: Design,
    spot: SpotSettings,
    replications: usize,
    seed: u64,
    levels: Vec<f64>,
}

fn redf_accuracy(g: &Globals, model: SvModelSpec, design: Design, spot: SpotSettings, reps: usize, seed: u64) -> Result<(), CliError> {
    let levels = standard_levels();
    let settings = McSettings { kind: "redf-accuracy", model, design, spot, replications: reps, seed, levels: levels.clone() };
    let prov = Provenance::new("experiment", &settings, Some(seed));
    let results = map_indexed(reps, |r| -> Result<Vec<(f64, f64)>, CliError> {
        let (panel, _, path) = simulate_path(&model, &design, &spot, derive_seed(seed, &[r as u64]))?;
        let est = Redf::from_path(&path)?.quantiles(&levels)?;
        let truth = panel.true_redf()?.quantiles(&levels)?;
        Ok(est.into_iter().zip(truth).collect())
    });
    let (ok, failed) = split(results);
    let mut rows = Vec::new();
    let mut rel = vec![Vec::new(); levels.len()];
    for (r, qs) in &ok {
        for (j, (&(q_hat, q_true), &a)) in qs.iter().zip(&levels).enumerate() {
            let e = q_hat / q_true - 1.0;
            rel[j].push(e);
            rows.push(vec![r.to_string(), format!("{a}"), num(q_hat), num(q_true), num(e), num(q_hat - q_true)]);
        }
    }
    let dest = Dest::File(g.out_dir.join("redf_accuracy.csv"));
    write_table(&dest, &prov, &["replication", "alpha", "q_hat", "q_true", "rel_error", "abs_error"], &rows)?;
    written(&dest);
    let summary: Vec<Vec<String>> = levels
        .iter()
        .zip(&rel)
        .filter(|(_, e)| !e.is_empty())
        .map(|(a, e)| {
            let mae = e.iter().map(|x| x.abs()).sum::<f64>() / e.len() as f64;
            vec![format!("{a}"), e.len().to_string(), num(mean(e)), num(mae)]
        })
        .collect();
    let dest = Dest::File(g.out_dir.join("redf_accuracy_summary.csv"));
    write_table(&dest, &prov, &["alpha", "replications", "mean_rel_error", "mean_abs_rel_error"], &summary)?;
    written(&dest);
    finish(g, &prov, &settings, reps, failed)
}

fn clt_pivot(g: &Globals, model: SvModelSpec, design: Design, spot: SpotSettings, levels: &[f64], reps: usize, seed: u64) -> Result<(), CliError> {
    let SvModelSpec::Heston { kappa, v0, xi, .. } = model else { unreachable!("checked by the caller") };
    let cir = Cir::new(kappa, v0, xi)?;
    let law = cir.stationary();
    let horizon = design.days as f64;
    let points: Vec<(f64, f64, f64, f64)> = levels
        .iter()
        .map(|&f| -> Result<_, CliError> {
            let x = law.quantile(f)?;
            Ok((f, x, cir.sigma_finite(x, horizon), cir.sigma(x)))
        })
        .collect::<Result<_, _>>()?;
    let settings = McSettings { kind: "clt-pivot", model, design, spot, replications: reps, seed, levels: levels.to_vec() };
    let prov = Provenance::new("experiment", &settings, Some(seed));
    let results = map_indexed(reps, |r| -> Result<Vec<f64>, CliError> {
        let (_, _, path) = simulate_path(&model, &design, &spot, derive_seed(seed, &[r as u64]))?;
        let redf = Redf::from_path(&path)?;
        Ok(points.iter().map(|&(_, x, _, _)| redf.cdf(x)).collect())
    });
    let (ok, failed) = split(results);
    let pivot = |fh: f64, f: f64, s: f64| horizon.sqrt() * (fh - f) / s.sqrt();
    let mut rows = Vec::new();
    let mut z = vec![(Vec::new(), Vec::new()); points.len()];
    for (r, fs) in &ok {
        for (j, (&fh, &(f, x, s_t, s))) in fs.iter().zip(&points).enumerate() {
            let (a, b) = (pivot(fh, f, s_t), pivot(fh, f, s));
            z[j].0.push(a);
            z[j].1.push(b);
            rows.push(vec![r.to_string(), format!("{f}"), num(x), num(fh), num(a), num(b)]);
        }
    }
    let dest = Dest::File(g.out_dir.join("clt_pivot.csv"));
    write_table(&dest, &prov, &["replication", "level", "x", "f_hat", "pivot_finite", "pivot_asymptotic"], &rows)?;
    written(&dest);
    let summary: Vec<Vec<String>> = points
        .iter()
        .zip(&z)
        .filter(|(_, (a, _))| !a.is_empty())
        .map(|(&(f, x, s_t, s), (a, b))| {
            vec![format!("{f}"), num(x), num(s_t), num(s), num(mean(a)), num(sample_var(a)), num(mean(b)), num(sample_var(b))]
        })
        .collect();
    let dest = Dest::File(g.out_dir.join("clt_pivot_summary.csv"));
    write_table(
        &dest,
        &prov,
        &["level", "x", "sigma_finite", "sigma", "mean_finite", "var_finite", "mean_asymptotic", "var_asymptotic"],
        &summary,
    )?;
    written(&dest);
    finish(g, &prov, &settings, reps, failed)
}

#[derive(Serialize)]
struct SizePower {
    null: SvModelSpec,
    data: SvModelSpec,
    design: Design,
    spot: SpotSettings,
    trials: usize,
    b: usize,
    seed: u64,
    procedures: Vec<String>,
    alpha: f64,
}

const KINDS: [StatKind; 2] = [StatKind::Rks, StatKind::Cvm];

fn kind_name(k: StatKind) -> &'static str {
    match k {
        StatKind::Rks => "rks",
        StatKind::Cvm => "rl2",
        StatKind::Ad => "ad",
    }
}

fn size_power(g: &Globals, sp: SizePower) -> Result<(), CliError> {
    let prov = Provenance::new("experiment", &sp, Some(sp.seed));
    let d = sp.design;
    let delta = 1.0 / d.n as f64;
    let options = g.file.gmm_options(sp.seed);
    let pcfg = PreavgConfig::new(delta, sp.spot.config.theta)?;
    let family = Family::of(&sp.null);
    let null_law = sp.null.stationary_marginal()?;
    let known = sp.procedures.iter().any(|p| p == "known");
    let estimated = sp.procedures.iter().any(|p| p == "estimated");
    // Known parameters: one set of critical values serves every trial.
    let shared = if known {
        let design = BootstrapDesign { days: d.days, steps_per_day: d.n, b: sp.b, seed: derive_seed(sp.seed, &[u64::MAX]) };
        Some(known_replicates(&sp.null, &design, &KINDS)?)
    } else {
        None
    };
    // Each trial: per procedure, per statistic, (observed, p-value).
    type Trial = Vec<(&'static str, StatKind, f64, f64)>;
    let results = map_indexed(sp.trials, |t| -> Result<Trial, CliError> {
        let (_, returns, path) = simulate_path(&sp.data, &d, &sp.spot, derive_seed(sp.seed, &[t as u64]))?;
        let redf = Redf::from_path(&path)?;
        let horizon = redf.horizon();
        let mut out = Vec::new();
        if let Some(reps) = &shared {
            for (k, reps) in KINDS.iter().zip(reps) {
                let obs = statistic(*k, &redf, &null_law, horizon).value;
                let rep = GofReport::new(*k, obs, reps.clone(), sp.seed, Procedure::Fixed, null_law, 0)?;
                out.push(("known", *k, obs, rep.p_value));
            }
        }
        if estimated {
            let iv = daily_iv_series(&returns, &pcfg)?;
            let targets = IvMoments::from_series(&iv)?;
            let fitted = gmm_fit(&targets, &family.default_start(targets.mean), &options)?.params;
            let law = fitted.stationary_marginal()?;
            let cfg = EstimatedDesign {
                design: BootstrapDesign { days: d.days, steps_per_day: d.n, b: sp.b, seed: derive_seed(sp.seed, &[t as u64, 1]) },
                omega: median_noise_sd(&path),
                spot: sp.spot.config,
            };
            let (reps, dropped) = estimated_replicates(&fitted, &cfg, &KINDS, |r| {
                let iv = daily_iv_series(r, &pcfg)?;
                Ok(gmm_fit(&IvMoments::from_series(&iv)?, &fitted, &options)?.params)
            })?;
            for (k, reps) in KINDS.iter().zip(reps) {
                let obs = statistic(*k, &redf, &law, horizon).value;
                let rep = GofReport::new(*k, obs, reps, cfg.design.seed, Procedure::Estimated, law, dropped)?;
                out.push(("estimated", *k, obs, rep.p_value));
            }
        }
        Ok(out)
    });
    let (ok, failed) = split(results);
    let mut rows = Vec::new();
    for (t, trial) in &ok {
        for &(p, k, obs, pv) in trial {
            rows.push(vec![t.to_string(), p.to_string(), kind_name(k).to_string(), num(obs), num(pv), ((pv <= sp.alpha) as u8).to_string()]);
        }
    }
    let dest = Dest::File(g.out_dir.join("size_power.csv"));
    write_table(&dest, &prov, &["trial", "procedure", "statistic", "observed", "p_value", "reject"], &rows)?;
    written(&dest);
    let mut summary = Vec::new();
    for p in ["known", "estimated"] {
        for k in KINDS {
            let pvs: Vec<f64> = ok.iter().flat_map(|(_, tr)| tr.iter().filter(|r| r.0 == p && r.1 == k).map(|r| r.3)).collect();
            if pvs.is_empty() {
                continue;
            }
            let rate = |a: f64| pvs.iter().filter(|&&v| v <= a).count() as f64 / pvs.len() as f64;
            summary.push(vec![p.to_string(), kind_name(k).to_string(), pvs.len().to_string(), num(rate(0.10)), num(rate(0.05)), num(rate(0.01))]);
        }
    }
    let dest = Dest::File(g.out_dir.join("size_power_summary.csv"));
    write_table(&dest, &prov, &["procedure", "statistic", "trials", "reject_10", "reject_05", "reject_01"], &summary)?;
    written(&dest);
    finish(g, &prov, &sp, sp.trials, failed)
}

#[derive(Serialize)]
struct EmpiricalSettings<'a> {
    kind: &'static str,
    input: &'a Path,
    spot: SpotSettings,
    b: usize,
    seed: u64,
}

#[derive(Serialize)]
struct FamilyResult {
    family: Family,
    params: SvModelSpec,
    objective: f64,
    report: GofReport,
}

fn empirical(g: &Globals, path_in: &Path, spot: SpotSettings, b: usize, seed: u64) -> Result<(), CliError> {
    let settings = EmpiricalSettings { kind: "empirical", input: path_in, spot, b, seed };
    let prov = Provenance::new("experiment", &settings, Some(seed));
    let returns = input::returns(path_in, None)?;
    let path = input::spot_path(&returns, &spot)?;
    let redf = Redf::from_path(&path)?;
    let pcfg = PreavgConfig::new(returns.delta_n, spot.config.theta)?;
    let targets = IvMoments::from_series(&daily_iv_series(&returns, &pcfg)?)?;
    let options = g.file.gmm_options(seed);
    let omega = median_noise_sd(&path);
    let days = path.v_hat.len();
    let steps = path.v_hat.iter().map(Vec::len).max().unwrap_or(0);
    let families = [Family::Heston, Family::Expou, Family::Tsou];
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (i, fam) in families.iter().enumerate() {
        let run = || -> Result<FamilyResult, CliError> {
            let fit = gmm_fit(&targets, &fam.default_start(targets.mean), &options)?;
            let law = fit.params.stationary_marginal()?;
            let observed = statistic(StatKind::Rks, &redf, &law, redf.horizon()).value;
            let cfg = EstimatedDesign {
                design: BootstrapDesign { days, steps_per_day: steps, b, seed: derive_seed(seed, &[i as u64]) },
                omega,
                spot: spot.config,
            };
            let fitted = fit.params;
            let (mut reps, dropped) = estimated_replicates(&fitted, &cfg, &[StatKind::Rks], |r| {
                let iv = daily_iv_series(r, &pcfg)?;
                Ok(gmm_fit(&IvMoments::from_series(&iv)?, &fitted, &options)?.params)
            })?;
            let report = GofReport::new(StatKind::Rks, observed, reps.remove(0), cfg.design.seed, Procedure::Estimated, law, dropped)?;
            Ok(FamilyResult { family: *fam, params: fitted, objective: fit.objective, report })
        };
        match run() {
            Ok(r) => results.push(r),
            Err(e) => failed.push(Failure { replication: i, error: format!("{fam:?}: {e}") }),
        }
    }
    let dest = Dest::File(g.out_dir.join("empirical.json"));
    write_json(&dest, &prov, &settings, &results)?;
    written(&dest);
    finish(g, &prov, &settings, families.len(), failed)
}
