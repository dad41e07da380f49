//! Subcommand implementations.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;
use volredf::calib::{daily_iv_series, gmm_fit, model_iv_moments, Family, IvMoments};
use volredf::gof::{
    estimated_replicates, known_replicates, statistic, BootstrapDesign, EstimatedDesign, GofReport, NullMarginal, Provenance as Procedure,
};
use volredf::marketdata::{clean_ticks, parse_clock, pretick, read_ticks, write_grid_csv, SessionBounds};
use volredf::par::with_jobs;
use volredf::preavg::PreavgConfig;
use volredf::redf::{longrun_variance, parse_levels, standard_levels, LongRunConfig, Redf};
use volredf::sim::{assemble_panel, SvModelSpec};

use crate::config::{resolve_design, resolve_model, resolve_spot, FileConfig, SpotSettings};
use crate::output::{num, write_csv, write_json, write_table, Dest, Provenance};
use crate::{input, BootstrapArg, Cli, CliError, Command, FormatArg, NullArg};

/// Global settings after merging flags, environment and the config file.
pub struct Globals {
    pub file: FileConfig,
    pub out_dir: PathBuf,
}

impl Globals {
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(0)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let out_dir = cli.out_dir.clone().or_else(|| file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let g = Globals { file, out_dir };
    with_jobs(jobs, move || dispatch(cli.command, &g))
}

fn done(dest: &Dest) {
    if let Dest::File(p) = dest {
        eprintln!("volredf: wrote {}", p.display());
    }
}

fn dispatch(cmd: Command, g: &Globals) -> Result<(), CliError> {
    match cmd {
        Command::Pretick { input, output, grid_seconds, session_start, session_end, strict, clean_window, clean_sd } => {
            cmd_pretick(g, &input, output.as_deref(), grid_seconds, &session_start, &session_end, strict, clean_window, clean_sd)
        }
        Command::Simulate { model, design, seed, output } => {
            let model = resolve_model(&model, g.file.model)?;
            let design = resolve_design(&design, &g.file, &model, 1)?;
            cmd_simulate(g, model, design, g.seed(seed), output.as_deref())
        }
        Command::Spotvol { input, spot, output } => {
            let spot = resolve_spot(&spot, &g.file)?;
            cmd_spotvol(g, &input.input, input.delta_n, &spot, output.as_deref())
        }
        Command::Redf { input, spot, quantiles, grid, xi, format, output } => {
            let spot = resolve_spot(&spot, &g.file)?;
            let req = RedfRequest { input: input.input, delta_n: input.delta_n, spot, quantiles, grid, xi, format };
            cmd_redf(g, req, output.as_deref())
        }
        Command::Gof { input, spot, null, stat, bootstrap, b, seed, model, gig, omega, output } => {
            let spot = resolve_spot(&spot, &g.file)?;
            let req = GofRequest {
                input: input.input,
                delta_n: input.delta_n,
                spot,
                null,
                stat: stat.kind(),
                bootstrap,
                b,
                seed: g.seed(seed),
                model,
                gig,
                omega,
            };
            cmd_gof(g, req, output.as_deref())
        }
        Command::Calibrate { input, family, theta, seed, output } => {
            cmd_calibrate(g, &input.input, input.delta_n, &family, theta, g.seed(seed), output.as_deref())
        }
        Command::Experiment { kind, replications, trials, b, model, design, spot, seed, input } => {
            let req = crate::experiment::Request { kind, replications, trials, b, model, design, spot, seed, input };
            crate::experiment::run(g, req)
        }
    }
}

#[derive(Serialize)]
struct PretickSettings<'a> {
    input: &'a Path,
    grid_seconds: f64,
    session_start: f64,
    session_end: f64,
    strict: bool,
    clean_window: Option<usize>,
    clean_sd: f64,
}

#[derive(Serialize)]
struct DaySummary<'a> {
    label: &'a str,
    effective_sample: f64,
    forward_filled: bool,
}

#[allow(clippy::too_many_arguments)]
fn cmd_pretick(
    g: &Globals,
    input: &Path,
    output: Option<&Path>,
    grid_seconds: f64,
    start: &str,
    end: &str,
    strict: bool,
    clean_window: Option<usize>,
    clean_sd: f64,
) -> Result<(), CliError> {
    let session = SessionBounds::new(parse_clock(start)?, parse_clock(end)?)?;
    let settings = PretickSettings {
        input,
        grid_seconds,
        session_start: session.start_of_day,
        session_end: session.start_of_day + session.length,
        strict,
        clean_window,
        clean_sd,
    };
    let prov = Provenance::new("pretick", &settings, None);
    let f = File::open(input).map_err(|e| CliError::io(input, e))?;
    let mut raw = read_ticks(f, &session, strict)?;
    let mut dropped = 0;
    if let Some(w) = clean_window {
        (raw, dropped) = clean_ticks(&raw, w, clean_sd);
    }
    let grid = pretick(&raw, grid_seconds, &session)?;
    let dest = Dest::resolve(output, &g.out_dir, "grid.csv");
    write_csv(&dest, &prov, |w| Ok(write_grid_csv(w, &grid)?))?;
    done(&dest);
    if let Dest::File(p) = &dest {
        let days: Vec<DaySummary> = grid
            .labels
            .iter()
            .zip(&grid.effective_sample)
            .zip(&grid.flagged)
            .map(|((label, &effective_sample), &forward_filled)| DaySummary { label, effective_sample, forward_filled })
            .collect();
        let summary = serde_json::json!({
            "delta_n": grid.delta_n,
            "ticks": raw.tick_count(),
            "dropped_outliers": dropped,
            "days": days,
        });
        let side = Dest::File(p.with_extension("days.json"));
        write_json(&side, &prov, &settings, &summary)?;
        done(&side);
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSettings {
    model: SvModelSpec,
    design: crate::config::Design,
    seed: u64,
}

fn cmd_simulate(g: &Globals, model: SvModelSpec, design: crate::config::Design, seed: u64, output: Option<&Path>) -> Result<(), CliError> {
    let settings = SimulateSettings { model, design, seed };
    let prov = Provenance::new("simulate", &settings, Some(seed));
    let panel = assemble_panel(&model, design.jumps.as_ref(), &design.noise, design.days, design.fine_steps, design.n, seed)?;
    let v = panel.v_coarse();
    let dest = Dest::resolve(output, &g.out_dir, "panel.csv");
    write_csv(&dest, &prov, |w| {
        let mut wr = csv::Writer::from_writer(w);
        let err = volredf::Error::from;
        wr.write_record(["day", "i", "log_price", "efficient_log_price", "v_true"]).map_err(err)?;
        for d in 0..design.days {
            for i in 0..=design.n {
                let k = d * design.n + i;
                wr.write_record([
                    d.to_string(),
                    i.to_string(),
                    format!("{:.17e}", panel.z[k]),
                    format!("{:.17e}", panel.x[k]),
                    format!("{:.17e}", v[k]),
                ])
                .map_err(err)?;
            }
        }
        wr.flush().map_err(|e| err(e.into()))?;
        Ok(())
    })?;
    done(&dest);
    Ok(())
}

#[derive(Serialize)]
struct SpotvolSettings<'a> {
    input: &'a Path,
    delta_n: Option<f64>,
    spot: SpotSettings,
}

fn cmd_spotvol(g: &Globals, input: &Path, delta_n: Option<f64>, spot: &SpotSettings, output: Option<&Path>) -> Result<(), CliError> {
    let settings = SpotvolSettings { input, delta_n, spot: *spot };
    let prov = Provenance::new("spotvol", &settings, None);
    let path = input::load_spot(input, delta_n, spot)?;
    let dest = Dest::resolve(output, &g.out_dir, "spot.csv");
    write_csv(&dest, &prov, |w| Ok(path.write_csv(w)?))?;
    if path.negative_count > 0 {
        eprintln!("volredf: {} bias-corrected estimates are negative (kept as is)", path.negative_count);
    }
    done(&dest);
    Ok(())
}

struct RedfRequest {
    input: PathBuf,
    delta_n: Option<f64>,
    spot: SpotSettings,
    quantiles: Option<String>,
    grid: Option<String>,
    xi: Option<f64>,
    format: FormatArg,
}

#[derive(Serialize)]
struct RedfSettings<'a> {
    input: &'a Path,
    delta_n: Option<f64>,
    spot: SpotSettings,
    quantiles: Vec<f64>,
    grid: Vec<f64>,
    xi: Option<f64>,
}

/// `start:stop:step`, a single value, or a comma-separated list.
fn parse_points(spec: &str) -> Result<Vec<f64>, CliError> {
    if spec.contains(',') {
        spec.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad number '{t}' in '{spec}'"))))
            .collect()
    } else {
        Ok(parse_levels(spec)?)
    }
}

#[derive(Serialize)]
struct QuantileRow {
    alpha: f64,
    quantile: f64,
    sigma_hat: Option<f64>,
}

#[derive(Serialize)]
struct CdfRow {
    x: f64,
    cdf: f64,
    sigma_hat: Option<f64>,
}

#[derive(Serialize)]
struct RedfResult {
    horizon: f64,
    cells: u64,
    lag_cells: Option<usize>,
    quantiles: Vec<QuantileRow>,
    cdf: Vec<CdfRow>,
}

fn cmd_redf(g: &Globals, req: RedfRequest, output: Option<&Path>) -> Result<(), CliError> {
    let grid = req.grid.as_deref().map(parse_points).transpose()?.unwrap_or_default();
    let quantiles = match (&req.quantiles, grid.is_empty()) {
        (Some(q), _) => parse_points(q)?,
        (None, true) => standard_levels(),
        (None, false) => Vec::new(),
    };
    if req.format == FormatArg::Csv && !quantiles.is_empty() && !grid.is_empty() {
        return Err(CliError::Config("CSV output holds either --quantiles or --grid; use --format json for both".into()));
    }
    let settings = RedfSettings { input: &req.input, delta_n: req.delta_n, spot: req.spot, quantiles: quantiles.clone(), grid: grid.clone(), xi: req.xi };
    let prov = Provenance::new("redf", &settings, None);
    let path = input::load_spot(&req.input, req.delta_n, &req.spot)?;
    let redf = Redf::from_path(&path)?;
    let values = path.flat();
    let lr = req.xi.map(|xi| LongRunConfig { xi });
    let mut lag_cells = None;
    let mut sigma = |x: f64| -> Result<Option<f64>, CliError> {
        match &lr {
            Some(cfg) => {
                let est = longrun_variance(&values, path.delta_n, x, cfg)?;
                lag_cells = Some(est.lag_cells);
                Ok(Some(est.value))
            }
            None => Ok(None),
        }
    };
    let mut qrows = Vec::new();
    for &alpha in &quantiles {
        let q = redf.quantile(alpha)?;
        qrows.push(QuantileRow { alpha, quantile: q, sigma_hat: sigma(q)? });
    }
    let mut crows = Vec::new();
    for &x in &grid {
        crows.push(CdfRow { x, cdf: redf.cdf(x), sigma_hat: sigma(x)? });
    }
    let dest = Dest::resolve(output, &g.out_dir, if req.format == FormatArg::Json { "redf.json" } else { "redf.csv" });
    match req.format {
        FormatArg::Json => {
            let result = RedfResult { horizon: redf.horizon(), cells: redf.cell_count(), lag_cells, quantiles: qrows, cdf: crows };
            write_json(&dest, &prov, &settings, &result)?;
        }
        FormatArg::Csv => {
            let with_sigma = req.xi.is_some();
            let fmt_sigma = |s: Option<f64>| s.map(num).unwrap_or_default();
            if !qrows.is_empty() {
                let mut header = vec!["alpha", "quantile"];
                if with_sigma {
                    header.push("sigma_hat");
                }
                let rows: Vec<Vec<String>> = qrows
                    .iter()
                    .map(|r| {
                        let mut row = vec![format!("{}", r.alpha), num(r.quantile)];
                        if with_sigma {
                            row.push(fmt_sigma(r.sigma_hat));
                        }
                        row
                    })
                    .collect();
                write_table(&dest, &prov, &header, &rows)?;
            } else {
                let mut header = vec!["x", "cdf"];
                if with_sigma {
                    header.push("sigma_hat");
                }
                let rows: Vec<Vec<String>> = crows
                    .iter()
                    .map(|r| {
                        let mut row = vec![format!("{}", r.x), num(r.cdf)];
                        if with_sigma {
                            row.push(fmt_sigma(r.sigma_hat));
                        }
                        row
                    })
                    .collect();
                write_table(&dest, &prov, &header, &rows)?;
            }
        }
    }
    done(&dest);
    Ok(())
}

struct GofRequest {
    input: PathBuf,
    delta_n: Option<f64>,
    spot: SpotSettings,
    null: NullArg,
    stat: volredf::gof::StatKind,
    bootstrap: BootstrapArg,
    b: usize,
    seed: u64,
    model: crate::config::ModelArgs,
    gig: Option<Vec<f64>>,
    omega: Option<f64>,
}

#[derive(Serialize)]
struct GofSettings<'a> {
    input: &'a Path,
    delta_n: Option<f64>,
    spot: SpotSettings,
    null: &'static str,
    statistic: volredf::gof::StatKind,
    bootstrap: &'static str,
    b: usize,
    model: Option<SvModelSpec>,
    gig: Option<Vec<f64>>,
    omega: Option<f64>,
    gmm_restarts: usize,
}

#[derive(Serialize)]
struct GofResult {
    report: Option<GofReport>,
    /// Statistic of the data against `null`, for `--bootstrap none`.
    observed: f64,
    null: NullMarginal,
    fitted: Option<SvModelSpec>,
    omega: Option<f64>,
    horizon: f64,
}

fn family_for(null: NullArg) -> Option<&'static str> {
    match null {
        NullArg::Gamma => Some("heston"),
        NullArg::Lognormal => Some("expou"),
        NullArg::Ig => Some("tsou"),
        NullArg::Gig => None,
    }
}

fn null_name(null: NullArg) -> &'static str {
    match null {
        NullArg::Gamma => "gamma",
        NullArg::Lognormal => "lognormal",
        NullArg::Ig => "ig",
        NullArg::Gig => "gig",
    }
}

fn cmd_gof(g: &Globals, req: GofRequest, output: Option<&Path>) -> Result<(), CliError> {
    if req.bootstrap != BootstrapArg::None && req.b == 0 {
        return Err(CliError::Config("-B must be at least 1".into()));
    }
    let family = family_for(req.null);
    let needs_model = req.bootstrap == BootstrapArg::Known || (req.bootstrap == BootstrapArg::None && req.null != NullArg::Gig);
    let model = match family {
        Some(f) if needs_model => {
            if req.model.model.as_deref().is_some_and(|m| !m.eq_ignore_ascii_case(f)) {
                return Err(CliError::Config(format!("the {} null belongs to the {f} family", null_name(req.null))));
            }
            let args = crate::config::ModelArgs { model: Some(f.to_string()), ..req.model.clone() };
            Some(resolve_model(&args, g.file.model)?)
        }
        _ => None,
    };
    if family.is_none() && req.bootstrap != BootstrapArg::None {
        return Err(CliError::Config("the gig null has no simulation model; use --bootstrap none".into()));
    }
    let gig = match (req.null, &req.gig) {
        (NullArg::Gig, Some(p)) if p.len() != 3 => return Err(CliError::Config("--gig takes three values a,b,p".into())),
        (NullArg::Gig, Some(p)) => Some(NullMarginal::Gig { a: p[0], b: p[1], p: p[2] }),
        (NullArg::Gig, None) => return Err(CliError::Config("--gig a,b,p is required for the gig null".into())),
        _ => None,
    };
    let options = g.file.gmm_options(req.seed);
    let settings = GofSettings {
        input: &req.input,
        delta_n: req.delta_n,
        spot: req.spot,
        null: null_name(req.null),
        statistic: req.stat,
        bootstrap: match req.bootstrap {
            BootstrapArg::Known => "known",
            BootstrapArg::Estimated => "estimated",
            BootstrapArg::None => "none",
        },
        b: req.b,
        model,
        gig: req.gig.clone(),
        omega: req.omega,
        gmm_restarts: options.restarts,
    };
    let prov = Provenance::new("gof", &settings, Some(req.seed));

    let loaded = input::load(&req.input, req.delta_n)?;
    let (path, returns) = match loaded {
        input::Loaded::Grid(grid) => {
            let r = volredf::marketdata::log_returns(&grid)?;
            (input::spot_path(&r, &req.spot)?, Some(r))
        }
        input::Loaded::Spot(p) => (p, None),
    };
    let redf = Redf::from_path(&path)?;
    let horizon = redf.horizon();
    let days = path.v_hat.len();
    let per_day = path.v_hat.iter().map(Vec::len).max().unwrap_or(0);
    let bd = g.file.bootstrap();
    let design = BootstrapDesign {
        days: bd.days.unwrap_or(days),
        steps_per_day: bd.steps_per_day.unwrap_or(per_day),
        b: bd.b.unwrap_or(req.b),
        seed: req.seed,
    };

    let result = match req.bootstrap {
        BootstrapArg::None => {
            let null = match (gig, model) {
                (Some(law), _) => law,
                (None, Some(m)) => m.stationary_marginal()?,
                (None, None) => unreachable!("model resolved for non-gig nulls"),
            };
            let observed = statistic(req.stat, &redf, &null, horizon).value;
            GofResult { report: None, observed, null, fitted: None, omega: None, horizon }
        }
        BootstrapArg::Known => {
            let m = model.expect("known procedure has a model");
            let null = m.stationary_marginal()?;
            let observed = statistic(req.stat, &redf, &null, horizon).value;
            let reps = known_replicates(&m, &design, &[req.stat])?.remove(0);
            let report = GofReport::new(req.stat, observed, reps, design.seed, Procedure::Fixed, null, 0)?;
            GofResult { report: Some(report), observed, null, fitted: None, omega: None, horizon }
        }
        BootstrapArg::Estimated => {
            let returns = returns.ok_or_else(|| CliError::Config("--bootstrap estimated needs a price grid as input".into()))?;
            let fam: Family = family.expect("checked above").parse()?;
            let pcfg = PreavgConfig::new(returns.delta_n, req.spot.config.theta)?;
            let iv = daily_iv_series(&returns, &pcfg)?;
            let targets = IvMoments::from_series(&iv)?;
            let fitted = gmm_fit(&targets, &fam.default_start(targets.mean), &options)?.params;
            let null = fitted.stationary_marginal()?;
            let observed = statistic(req.stat, &redf, &null, horizon).value;
            let omega = match req.omega {
                Some(o) => o,
                None => median_noise_sd(&path),
            };
            let cfg = EstimatedDesign { design, omega, spot: req.spot.config };
            let (mut reps, dropped) = estimated_replicates(&fitted, &cfg, &[req.stat], |r| {
                let iv = daily_iv_series(r, &pcfg)?;
                Ok(gmm_fit(&IvMoments::from_series(&iv)?, &fitted, &options)?.params)
            })?;
            let report = GofReport::new(req.stat, observed, reps.remove(0), design.seed, Procedure::Estimated, null, dropped)?;
            GofResult { report: Some(report), observed, null, fitted: Some(fitted), omega: Some(omega), horizon }
        }
    };
    let dest = Dest::resolve(output, &g.out_dir, "gof.json");
    write_json(&dest, &prov, &settings, &result)?;
    done(&dest);
    Ok(())
}

/// √median(ω̂²) over all cells, the noise level for simulated replicates.
pub fn median_noise_sd(path: &volredf::spotvol::SpotVariancePath) -> f64 {
    let mut om: Vec<f64> = path.omega2_hat.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    if om.is_empty() {
        return 0.0;
    }
    om.sort_by(f64::total_cmp);
    om[om.len() / 2].max(0.0).sqrt()
}

#[derive(Serialize)]
struct CalibrateSettings<'a> {
    input: &'a Path,
    delta_n: Option<f64>,
    family: Family,
    theta: f64,
    gmm: volredf::calib::GmmOptions,
}

#[derive(Serialize)]
struct CalibrateResult {
    params: SvModelSpec,
    objective: f64,
    iterations: usize,
    restarts_used: usize,
    converged: bool,
    feller: Option<bool>,
    days: usize,
    sample_moments: IvMoments,
    fitted_moments: IvMoments,
    stationary_law: NullMarginal,
}

fn cmd_calibrate(
    g: &Globals,
    input_path: &Path,
    delta_n: Option<f64>,
    family: &str,
    theta: Option<f64>,
    seed: u64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let fam: Family = family.parse()?;
    let theta = theta.or(g.file.spot().theta).unwrap_or(1.0 / 3.0);
    let options = g.file.gmm_options(seed);
    let settings = CalibrateSettings { input: input_path, delta_n, family: fam, theta, gmm: options };
    let prov = Provenance::new("calibrate", &settings, Some(seed));
    let returns = input::returns(input_path, delta_n)?;
    let pcfg = PreavgConfig::new(returns.delta_n, theta)?;
    let iv = daily_iv_series(&returns, &pcfg)?;
    let targets = IvMoments::from_series(&iv)?;
    let fit = gmm_fit(&targets, &fam.default_start(targets.mean), &options)?;
    let result = CalibrateResult {
        params: fit.params,
        objective: fit.objective,
        iterations: fit.iterations,
        restarts_used: fit.restarts_used,
        converged: fit.converged,
        feller: fit.params.feller(),
        days: iv.len(),
        sample_moments: targets,
        fitted_moments: model_iv_moments(&fit.params)?,
        stationary_law: fit.params.stationary_marginal()?,
    };
    let dest = Dest::resolve(output, &g.out_dir, "calibration.json");
    write_json(&dest, &prov, &settings, &result)?;
    done(&dest);
    Ok(())
}
