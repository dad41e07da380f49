//! Browser bindings: simulate a panel, estimate its spot variance, compare
//! the realized EDF with the truth and test the stationary law.
//!
//! Results cross into JavaScript as JSON strings.

use serde::Serialize;
use volredf::gof::{known_replicates, statistic, BootstrapDesign, GofReport, Provenance, StatKind};
use volredf::redf::{standard_levels, Redf};
use volredf::sim::{assemble_panel, JumpSpec, NoiseSpec, SimulatedPanel, SvModelSpec};
use volredf::spotvol::{estimate_spot_variance, SpotConfig, SpotVariancePath};
use volredf::{Error, Result};
use wasm_bindgen::prelude::*;

/// Euler steps per observation interval; kept small for the browser.
const SUBSTEPS: usize = 4;
const MAX_DAYS: u32 = 120;

fn model(family: &str) -> Result<SvModelSpec> {
    match family {
        "heston" => Ok(SvModelSpec::heston_default()),
        "expou" => Ok(SvModelSpec::expou_default()),
        "tsou" => Ok(SvModelSpec::Tsou { kappa: 0.05, c: 1.0, lambda: std::f64::consts::PI, beta: 0.5 }),
        other => Err(Error::InvalidArgument(format!("unknown model family '{other}'"))),
    }
}

#[wasm_bindgen]
pub struct Demo {
    model: SvModelSpec,
    panel: SimulatedPanel,
    path: SpotVariancePath,
    redf: Redf,
    truth: Redf,
}

#[derive(Serialize)]
pub struct Paths {
    pub t: Vec<f64>,
    pub v_true: Vec<f64>,
    pub v_hat: Vec<f64>,
}

#[derive(Serialize)]
pub struct Curves {
    pub x: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub f_true: Vec<f64>,
    pub f_null: Vec<f64>,
}

#[derive(Serialize)]
pub struct Quantiles {
    pub alpha: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub q_true: Vec<f64>,
}

impl Demo {
    pub fn build(family: &str, days: u32, n: u32, gamma: f64, jump_share: f64, seed: u32) -> Result<Demo> {
        if days == 0 || days > MAX_DAYS || n < 60 {
            return Err(Error::InvalidArgument(format!("need 1..={MAX_DAYS} days and at least 60 observations per day")));
        }
        let model = model(family)?;
        let jumps = if jump_share > 0.0 { Some(JumpSpec::from_share(3.0, 0.5, jump_share, model.mean_variance())?) } else { None };
        let (days, n) = (days as usize, n as usize);
        let panel = assemble_panel(&model, jumps.as_ref(), &NoiseSpec { gamma }, days, n * SUBSTEPS, n, seed as u64)?;
        let path = estimate_spot_variance(&panel.returns()?, &SpotConfig::default())?;
        let redf = Redf::from_path(&path)?;
        let truth = panel.true_redf()?;
        Ok(Demo { model, panel, path, redf, truth })
    }

    pub fn paths_value(&self, max_points: usize) -> Paths {
        let v_true = self.panel.v_coarse();
        let v_hat = self.path.flat();
        let len = v_hat.len().min(v_true.len());
        let stride = len.div_ceil(max_points.max(1)).max(1);
        let dn = self.path.delta_n;
        let idx: Vec<usize> = (0..len).step_by(stride).collect();
        Paths {
            t: idx.iter().map(|&i| i as f64 * dn).collect(),
            v_true: idx.iter().map(|&i| v_true[i]).collect(),
            v_hat: idx.iter().map(|&i| v_hat[i]).collect(),
        }
    }

    pub fn curves_value(&self, points: usize) -> Result<Curves> {
        let null = self.model.stationary_marginal()?;
        let hi = self.truth.quantile(0.995)?.max(self.redf.quantile(0.995)?);
        let x: Vec<f64> = (0..points.max(2)).map(|i| hi * i as f64 / (points.max(2) - 1) as f64).collect();
        Ok(Curves {
            f_hat: x.iter().map(|&v| self.redf.cdf(v)).collect(),
            f_true: x.iter().map(|&v| self.truth.cdf(v)).collect(),
            f_null: x.iter().map(|&v| null.cdf(v)).collect(),
            x,
        })
    }

    pub fn quantiles_value(&self) -> Result<Quantiles> {
        let alpha = standard_levels();
        Ok(Quantiles { q_hat: self.redf.quantiles(&alpha)?, q_true: self.truth.quantiles(&alpha)?, alpha })
    }

    /// Test against the simulating model's own law with known parameters.
    pub fn gof_value(&self, b: usize, stat: &str, seed: u32) -> Result<GofReport> {
        let kind = match stat {
            "rks" => StatKind::Rks,
            "cvm" => StatKind::Cvm,
            "ad" => StatKind::Ad,
            other => return Err(Error::InvalidArgument(format!("unknown statistic '{other}'"))),
        };
        let null = self.model.stationary_marginal()?;
        let observed = statistic(kind, &self.redf, &null, self.redf.horizon()).value;
        let design = BootstrapDesign { days: self.panel.days, steps_per_day: self.panel.coarse_n, b, seed: seed as u64 };
        let reps = known_replicates(&self.model, &design, &[kind])?.remove(0);
        GofReport::new(kind, observed, reps, design.seed, Provenance::Fixed, null, 0)
    }
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
impl Demo {
    /// Simulates `days` days of `n` noisy observations and estimates V̂.
    #[wasm_bindgen(constructor)]
    pub fn new(family: &str, days: u32, n: u32, gamma: f64, jump_share: f64, seed: u32) -> std::result::Result<Demo, JsError> {
        Demo::build(family, days, n, gamma, jump_share, seed).map_err(|e| JsError::new(&e.to_string()))
    }

    /// `{t, v_true, v_hat}` thinned to at most `max_points` points.
    pub fn paths(&self, max_points: u32) -> std::result::Result<String, JsError> {
        js(Ok(self.paths_value(max_points as usize)))
    }

    /// `{x, f_hat, f_true, f_null}` on an even grid.
    pub fn curves(&self, points: u32) -> std::result::Result<String, JsError> {
        js(self.curves_value(points as usize))
    }

    pub fn quantiles(&self) -> std::result::Result<String, JsError> {
        js(self.quantiles_value())
    }

    pub fn gof(&self, b: u32, stat: &str, seed: u32) -> std::result::Result<String, JsError> {
        js(self.gof_value(b as usize, stat, seed))
    }
}
