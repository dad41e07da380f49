//! Reading grid and spot-variance CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use volredf::marketdata::{log_returns, read_grid_csv, ReturnSeries, TickSeries};
use volredf::spotvol::{diurnal_adjust, estimate_spot_variance, SpotVariancePath};

use crate::config::SpotSettings;
use crate::CliError;

pub enum Loaded {
    Grid(TickSeries),
    Spot(SpotVariancePath),
}

fn header(path: &Path) -> Result<String, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if !line.trim().is_empty() && !line.starts_with('#') {
            return Ok(line);
        }
    }
    Err(volredf::Error::Empty(format!("{} has no header", path.display())).into())
}

/// Longest day (in rows) of a `day,...` CSV, which fixes Δ when absent.
fn longest_day(path: &Path) -> Result<usize, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(f);
    let day_col = rdr
        .headers()
        .map_err(volredf::Error::from)?
        .iter()
        .position(|h| h == "day")
        .ok_or_else(|| volredf::Error::Parse { row: 0, msg: "missing 'day' column".into() })?;
    let (mut best, mut run, mut last) = (0usize, 0usize, None::<String>);
    for rec in rdr.records() {
        let rec = rec.map_err(volredf::Error::from)?;
        let d = rec.get(day_col).unwrap_or("").to_string();
        if last.as_deref() == Some(d.as_str()) {
            run += 1;
        } else {
            run = 1;
            last = Some(d);
        }
        best = best.max(run);
    }
    Ok(best)
}

pub fn load(path: &Path, delta_n: Option<f64>) -> Result<Loaded, CliError> {
    let head = header(path)?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    let rows = longest_day(path)?;
    let open = || File::open(path).map_err(|e| CliError::io(path, e));
    if cols.contains(&"v_hat") {
        let delta = delta_n.unwrap_or(1.0 / rows.max(1) as f64);
        Ok(Loaded::Spot(SpotVariancePath::read_csv(open()?, delta)?))
    } else if cols.contains(&"log_price") {
        if rows < 2 {
            return Err(volredf::Error::InsufficientData(format!("{}: days need at least two grid points", path.display())).into());
        }
        let delta = delta_n.unwrap_or(1.0 / (rows - 1) as f64);
        Ok(Loaded::Grid(read_grid_csv(open()?, delta)?))
    } else {
        Err(volredf::Error::Parse { row: 0, msg: format!("{}: expected a log_price or v_hat column", path.display()) }.into())
    }
}

pub fn returns(path: &Path, delta_n: Option<f64>) -> Result<ReturnSeries, CliError> {
    match load(path, delta_n)? {
        Loaded::Grid(g) => Ok(log_returns(&g)?),
        Loaded::Spot(_) => Err(CliError::Config(format!("{} holds spot variances; this command needs a price grid", path.display()))),
    }
}

pub fn spot_path(returns: &ReturnSeries, spot: &SpotSettings) -> Result<SpotVariancePath, CliError> {
    let path = estimate_spot_variance(returns, &spot.config)?;
    Ok(if spot.diurnal { diurnal_adjust(&path)? } else { path })
}

/// Spot-variance path from either kind of input.
pub fn load_spot(path: &Path, delta_n: Option<f64>, spot: &SpotSettings) -> Result<SpotVariancePath, CliError> {
    match load(path, delta_n)? {
        Loaded::Grid(g) => spot_path(&log_returns(&g)?, spot),
        Loaded::Spot(p) => Ok(p),
    }
}
