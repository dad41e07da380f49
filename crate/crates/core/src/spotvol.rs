//! Block-wise spot variance and spot noise variance, bias correction, the
//! piecewise-constant path, and the diurnal correction.

use crate::error::{Error, Result};
use crate::marketdata::ReturnSeries;
use crate::preavg::{adjacent_noise_variance, preavg_bipower, preaverage_day, truncation_threshold, PreavgConfig};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// How the block length h_n is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BlockRule {
    Explicit { h_n: usize },
    /// Blocks cover this fraction of a full session, h = round(fraction/Δ).
    ClockSpan { fraction: f64 },
    /// h = round(scale·Δ^{-3/4}).
    PowerLaw { scale: f64 },
}

impl Default for BlockRule {
    /// 1.5 hours of a 6.5 hour session.
    fn default() -> Self {
        BlockRule::ClockSpan { fraction: 1.5 / 6.5 }
    }
}

impl BlockRule {
    /// Resolves h_n for grid spacing `delta_n`, requiring h_n ≥ 4·k_n and
    /// that a block fits in one session.
    pub fn resolve(&self, delta_n: f64, k_n: usize) -> Result<usize> {
        let h = match *self {
            BlockRule::Explicit { h_n } => h_n,
            BlockRule::ClockSpan { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::invalid(format!("block fraction {fraction} outside (0, 1]")));
                }
                (fraction / delta_n).round() as usize
            }
            BlockRule::PowerLaw { scale } => {
                if !(scale > 0.0) {
                    return Err(Error::invalid("power-law block scale must be positive"));
                }
                (scale * delta_n.powf(-0.75)).round() as usize
            }
        };
        if h < 4 * k_n {
            return Err(Error::invalid(format!("block length {h} is below 4·k_n = {}", 4 * k_n)));
        }
        if h as f64 * delta_n > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("block length {h} exceeds one session")));
        }
        Ok(h)
    }
}

/// Ṽᵢ = (1/(h√Δ))·Σ_{m=0}^{h−1} Z̄²ᵢ₊ₘ·1{|Z̄ᵢ₊ₘ| ≤ v} for i = 0..=n−h−k+1,
/// where `pre` holds the day's n−k+2 pre-averaged returns.
pub fn raw_spot_variance(pre: &[f64], v_n: f64, h_n: usize, delta_n: f64) -> Result<Vec<f64>> {
    if h_n == 0 || pre.len() < h_n + 1 {
        return Err(Error::insufficient(format!(
            "{} pre-averaged values cannot fill a block of {h_n}",
            pre.len()
        )));
    }
    let count = pre.len() - h_n;
    let kept = |z: f64| if z.abs() <= v_n { z * z } else { 0.0 };
    let scale = 1.0 / (h_n as f64 * delta_n.sqrt());
    let mut out = Vec::with_capacity(count);
    let mut s: f64 = pre[..h_n].iter().map(|&z| kept(z)).sum();
    out.push(s * scale);
    for i in 1..count {
        s += kept(pre[i + h_n - 1]) - kept(pre[i - 1]);
        // Rounding drift only grows the sum's absolute error; reset periodically.
        if i % 4096 == 0 {
            s = pre[i..i + h_n].iter().map(|&z| kept(z)).sum();
        }
        out.push(s.max(0.0) * scale);
    }
    Ok(out)
}

/// ω̂²ᵢ = −mean of ΔZ_{j}ΔZ_{j+1} over the returns i+1..i+L of the day
/// (L = `block_len`, clipped at the day end), for i = 0..`count`−1.
pub fn noise_variance_day(returns: &[f64], block_len: usize, count: usize) -> Result<Vec<f64>> {
    let n = returns.len();
    if block_len < 2 || n < 2 {
        return Err(Error::insufficient("noise block needs two returns"));
    }
    if count > n.saturating_sub(1) {
        return Err(Error::insufficient(format!("{count} noise blocks requested on {n} returns")));
    }
    // prod[j] = r_j·r_{j+1}; block i covers returns i..i+L−1 zero-based.
    let prod: Vec<f64> = returns.windows(2).map(|w| w[0] * w[1]).collect();
    let mut prefix = Vec::with_capacity(prod.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for p in &prod {
        acc += p;
        prefix.push(acc);
    }
    Ok((0..count)
        .map(|i| {
            let end = (i + block_len - 1).min(prod.len());
            let m = end - i;
            -(prefix[end] - prefix[i]) / m as f64
        })
        .collect())
}

/// Per-day ω̂² series on blocks of h_n + k_n returns.
pub fn noise_variance(returns: &ReturnSeries, h_n: usize, k_n: usize) -> Result<Vec<Vec<f64>>> {
    returns
        .days
        .iter()
        .map(|r| {
            let count = (r.len() + 2).checked_sub(h_n + k_n).filter(|&c| c > 0).ok_or_else(|| {
                Error::insufficient(format!("day with {} returns is shorter than h_n + k_n", r.len()))
            })?;
            noise_variance_day(r, h_n + k_n, count)
        })
        .collect()
}

/// V̂ = Ṽ/(θψ₂) − ψ₁ω̂²/(θ²ψ₂). Returns the series and the number of
/// negative values, which are kept.
pub fn debias(v_tilde: &[f64], omega2: &[f64], cfg: &PreavgConfig) -> Result<(Vec<f64>, usize)> {
    if v_tilde.len() != omega2.len() {
        return Err(Error::LengthMismatch { left: v_tilde.len(), right: omega2.len() });
    }
    let th = cfg.theta_eff();
    let (a, b) = (1.0 / (th * cfg.psi.psi2_n), cfg.psi.psi1_n / (th * th * cfg.psi.psi2_n));
    let v: Vec<f64> = v_tilde.iter().zip(omega2).map(|(vt, w)| a * vt - b * w).collect();
    let neg = v.iter().filter(|&&x| x < 0.0).count();
    Ok((v, neg))
}

/// Piecewise-constant spot variance over a panel of days. Day `d` has
/// `v_hat[d].len()` cells of width `delta_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotVariancePath {
    pub delta_n: f64,
    pub v_hat: Vec<Vec<f64>>,
    pub omega2_hat: Vec<Vec<f64>>,
    pub v_tilde: Vec<Vec<f64>>,
    /// Whether the pre-averaged return starting at each cell was truncated.
    pub truncated: Vec<Vec<bool>>,
    pub negative_count: usize,
    /// Days whose threshold collapsed to zero (zero bipower variation).
    pub degenerate_days: Vec<usize>,
    pub diurnal_factor: Option<Vec<f64>>,
}

/// Holds the last value of `values` until `cells` entries exist.
pub fn extend_series(values: &[f64], cells: usize) -> Vec<f64> {
    let mut v = values[..values.len().min(cells)].to_vec();
    let last = *values.last().expect("nonempty series");
    v.resize(cells, last);
    v
}

impl SpotVariancePath {
    /// A path with the given per-day values and no companion estimates.
    pub fn from_values(delta_n: f64, v_hat: Vec<Vec<f64>>) -> Result<Self> {
        if v_hat.is_empty() || v_hat.iter().any(Vec::is_empty) {
            return Err(Error::Empty("spot variance path".into()));
        }
        let negative_count = v_hat.iter().flatten().filter(|&&x| x < 0.0).count();
        let zeros = v_hat.iter().map(|d| vec![0.0; d.len()]).collect::<Vec<_>>();
        Ok(Self {
            delta_n,
            omega2_hat: zeros.clone(),
            v_tilde: zeros,
            truncated: v_hat.iter().map(|d| vec![false; d.len()]).collect(),
            v_hat,
            negative_count,
            degenerate_days: Vec::new(),
            diurnal_factor: None,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.v_hat.iter().map(Vec::len).sum()
    }

    /// Total time span covered.
    pub fn horizon(&self) -> f64 {
        self.cell_count() as f64 * self.delta_n
    }

    /// Cell values concatenated across days.
    pub fn flat(&self) -> Vec<f64> {
        self.v_hat.iter().flatten().copied().collect()
    }

    /// V̂ at time t ∈ [0, T], using the left endpoint of the enclosing cell;
    /// t = T maps to the last cell.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if !(t >= 0.0) || t > self.horizon() * (1.0 + 1e-12) {
            return None;
        }
        let total = self.cell_count();
        let mut idx = ((t / self.delta_n).floor() as usize).min(total - 1);
        for day in &self.v_hat {
            if idx < day.len() {
                return Some(day[idx]);
            }
            idx -= day.len();
        }
        None
    }

    /// CSV with columns `day,i,v_hat,omega2_hat,truncated`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["day", "i", "v_hat", "omega2_hat", "truncated"])?;
        for (d, day) in self.v_hat.iter().enumerate() {
            for (i, v) in day.iter().enumerate() {
                wr.write_record([
                    d.to_string(),
                    i.to_string(),
                    format!("{v:.17e}"),
                    format!("{:.17e}", self.omega2_hat[d][i]),
                    u8::from(self.truncated[d][i]).to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the `day,i,v_hat` columns written by [`Self::write_csv`].
    pub fn read_csv<R: std::io::Read>(r: R, delta_n: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse { row: 0, msg: format!("missing '{name}' column") })
        };
        let (dc, vc) = (col("day")?, col("v_hat")?);
        let wc = headers.iter().position(|h| h == "omega2_hat");
        let mut days: Vec<Vec<f64>> = Vec::new();
        let mut omegas: Vec<Vec<f64>> = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let row = idx + 1;
            let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
            let get = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse { row, msg: format!("bad value in column {c}") })
            };
            let d = get(dc)? as usize;
            if d == days.len() {
                days.push(Vec::new());
                omegas.push(Vec::new());
            } else if d + 1 != days.len() {
                return Err(Error::Parse { row, msg: "rows must be grouped by day".into() });
            }
            days[d].push(get(vc)?);
            omegas[d].push(match wc {
                Some(c) => get(c)?,
                None => 0.0,
            });
        }
        let mut path = Self::from_values(delta_n, days)?;
        path.omega2_hat = omegas;
        Ok(path)
    }
}

/// Full spot estimation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotConfig {
    pub theta: f64,
    pub trunc_alpha: f64,
    pub omega_bar: f64,
    pub block: BlockRule,
    /// Apply the jump truncation; off keeps every pre-averaged return.
    pub truncate: bool,
}

impl Default for SpotConfig {
    fn default() -> Self {
        Self { theta: 1.0 / 3.0, trunc_alpha: 0.001, omega_bar: 0.2, block: BlockRule::default(), truncate: true }
    }
}

/// Returns → pre-averaging → per-day threshold → Ṽ, ω̂² → V̂ held to the day end.
pub fn estimate_spot_variance(returns: &ReturnSeries, cfg: &SpotConfig) -> Result<SpotVariancePath> {
    let delta_n = returns.delta_n;
    let pcfg = PreavgConfig::new(delta_n, cfg.theta)?;
    let k = pcfg.k_n;
    let h = cfg.block.resolve(delta_n, k)?;
    let w = pcfg.weights();
    let nd = returns.days.len();
    let mut path = SpotVariancePath {
        delta_n,
        v_hat: Vec::with_capacity(nd),
        omega2_hat: Vec::with_capacity(nd),
        v_tilde: Vec::with_capacity(nd),
        truncated: Vec::with_capacity(nd),
        negative_count: 0,
        degenerate_days: Vec::new(),
        diurnal_factor: None,
    };
    for (d, r) in returns.days.iter().enumerate() {
        let n = r.len();
        if n + 2 < h + k + 1 {
            return Err(Error::insufficient(format!("day {d}: {n} returns cannot fill a block of h_n + k_n = {}", h + k)));
        }
        let pre = preaverage_day(r, &w);
        let v_n = if cfg.truncate {
            let iv = preavg_bipower(&pre, n, &pcfg, adjacent_noise_variance(r)?)?.iv;
            if iv == 0.0 {
                path.degenerate_days.push(d);
            }
            truncation_threshold(iv, delta_n, cfg.trunc_alpha, cfg.omega_bar)?
        } else {
            f64::INFINITY
        };
        let vt = raw_spot_variance(&pre, v_n, h, delta_n)?;
        let om = noise_variance_day(r, h + k, vt.len())?;
        let (vh, neg) = debias(&vt, &om, &pcfg)?;
        path.negative_count += neg;
        let mut trunc: Vec<bool> = pre.iter().map(|z| z.abs() > v_n).collect();
        trunc.resize(n, false);
        trunc.truncate(n);
        path.v_hat.push(extend_series(&vh, n));
        path.omega2_hat.push(extend_series(&om, n));
        path.v_tilde.push(extend_series(&vt, n));
        path.truncated.push(trunc);
    }
    Ok(path)
}

/// Time-of-day factor d(τ) (summing to one over a full day) from the mean
/// of V̂ across full-length days, and the path rescaled by 1/(n·d(τ)).
pub fn diurnal_adjust(path: &SpotVariancePath) -> Result<SpotVariancePath> {
    if path.v_hat.len() < 2 {
        return Err(Error::insufficient("diurnal correction needs at least two days"));
    }
    let n = path.v_hat.iter().map(Vec::len).max().expect("nonempty");
    let full: Vec<&Vec<f64>> = path.v_hat.iter().filter(|d| d.len() == n).collect();
    if full.len() < 2 {
        return Err(Error::insufficient("fewer than two full-length days"));
    }
    let mut avg = vec![0.0; n];
    for day in &full {
        for (a, v) in avg.iter_mut().zip(day.iter()) {
            *a += v;
        }
    }
    let total: f64 = avg.iter().sum();
    if !(total > 0.0) {
        return Err(Error::domain("mean intraday variance is not positive"));
    }
    let factor: Vec<f64> = avg.iter().map(|a| a / total).collect();
    if factor.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::domain("diurnal factor has a nonpositive entry"));
    }
    let mut out = path.clone();
    for day in out.v_hat.iter_mut() {
        for (v, f) in day.iter_mut().zip(&factor) {
            *v /= n as f64 * f;
        }
    }
    out.negative_count = out.v_hat.iter().flatten().filter(|&&x| x < 0.0).count();
    out.diurnal_factor = Some(factor);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal, substream};

    #[test]
    fn block_rules() {
        let d = 1.0 / 2340.0;
        assert_eq!(BlockRule::default().resolve(d, 16).unwrap(), 540);
        assert_eq!(BlockRule::PowerLaw { scale: 1.0 }.resolve(d, 16).unwrap(), 336);
        assert!(BlockRule::Explicit { h_n: 60 }.resolve(d, 16).is_err());
        assert!(BlockRule::Explicit { h_n: 3000 }.resolve(d, 16).is_err());
    }

    #[test]
    fn constant_and_fully_truncated_blocks() {
        let delta: f64 = 0.01;
        let pre = vec![0.3; 50];
        let v = raw_spot_variance(&pre, f64::INFINITY, 10, delta).unwrap();
        assert_eq!(v.len(), 40);
        assert!(v.iter().all(|&x| (x - 0.09 / delta.sqrt()).abs() < 1e-12));
        let v = raw_spot_variance(&pre, 0.1, 10, delta).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        assert!(raw_spot_variance(&pre, 1.0, 50, delta).is_err());
    }

    #[test]
    fn sliding_sum_matches_direct() {
        let mut rng = substream(3, &[]);
        let pre: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        let (h, delta) = (37, 1e-3);
        let v = raw_spot_variance(&pre, 1.5, h, delta).unwrap();
        for i in [0, 1, 4095, 4096, 4097, 9000, v.len() - 1] {
            let direct: f64 = pre[i..i + h].iter().filter(|z| z.abs() <= 1.5).map(|z| z * z).sum::<f64>()
                / (h as f64 * delta.sqrt());
            assert!((v[i] - direct).abs() < 1e-12 * direct.max(1.0), "{i}");
        }
    }

    #[test]
    fn noise_estimator_examples() {
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 0.2 } else { -0.2 }).collect();
        let w = noise_variance_day(&alt, 20, 50).unwrap();
        assert!(w.iter().all(|&x| (x - 0.04).abs() < 1e-15));

        let mut rng = substream(11, &[]);
        let omega2: f64 = 1e-4;
        let u: Vec<f64> = (0..200_001).map(|_| omega2.sqrt() * normal(&mut rng)).collect();
        let r: Vec<f64> = u.windows(2).map(|p| p[1] - p[0]).collect();
        let blocks: Vec<f64> = (0..1000).map(|b| noise_variance_day(&r[b * 200..(b + 1) * 200], 200, 1).unwrap()[0]).collect();
        let m = blocks.iter().sum::<f64>() / 1000.0;
        let se = (blocks.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 999.0).sqrt() / 1000f64.sqrt();
        assert!((m - omega2).abs() < 3.0 * se, "{m} vs {omega2} (se {se})");

        // Smooth noiseless price: estimate is of order Δ.
        let n = 2340;
        let smooth: Vec<f64> = (0..n).map(|i| ((i + 1) as f64 / n as f64).sin() - (i as f64 / n as f64).sin()).collect();
        let est = noise_variance_day(&smooth, 556, 100).unwrap();
        assert!(est.iter().all(|x| x.abs() < (1.0 / n as f64).sqrt()));
    }

    #[test]
    fn debias_examples() {
        let cfg = PreavgConfig::new(1.0 / 2340.0, 1.0 / 3.0).unwrap();
        let (a, b) = cfg.bias_coefficients();
        let omega2 = 3e-4;
        let (v, neg) = debias(&[a + b * omega2], &[omega2], &cfg).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert_eq!(neg, 0);
        let (v, _) = debias(&[0.5], &[0.0], &cfg).unwrap();
        assert!((v[0] - 0.5 / a).abs() < 1e-12);
        assert!(debias(&[1.0], &[], &cfg).is_err());
        let (_, neg) = debias(&[0.0, 0.0], &[1.0, 0.0], &cfg).unwrap();
        assert_eq!(neg, 1);
    }

    #[test]
    fn path_queries() {
        let p = SpotVariancePath::from_values(0.25, vec![vec![2.0; 4]]).unwrap();
        assert_eq!(p.value_at(0.0), Some(2.0));
        assert_eq!(p.value_at(1.0), Some(2.0));
        let p = SpotVariancePath::from_values(0.25, vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(p.value_at(0.3), Some(2.0));
        assert_eq!(p.value_at(0.6), Some(3.0));
        assert_eq!(p.value_at(1.0), Some(4.0));
        assert_eq!(p.value_at(1.1), None);
        assert_eq!(extend_series(&[1.0, 5.0], 4), vec![1.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn csv_round_trip() {
        let p = SpotVariancePath::from_values(0.5, vec![vec![1.0, -2.0], vec![3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = SpotVariancePath::read_csv(buf.as_slice(), 0.5).unwrap();
        assert_eq!(q.v_hat, p.v_hat);
        assert_eq!(q.negative_count, 1);
    }

    #[test]
    fn diurnal_flat_and_scaled() {
        let flat = SpotVariancePath::from_values(0.25, vec![vec![2.0; 4], vec![2.0; 4]]).unwrap();
        let adj = diurnal_adjust(&flat).unwrap();
        assert!(adj.diurnal_factor.as_ref().unwrap().iter().all(|&f| (f - 0.25).abs() < 1e-15));
        assert_eq!(adj.v_hat, flat.v_hat);

        let bumped = SpotVariancePath::from_values(0.25, vec![vec![1.0, 2.0, 1.0, 1.0], vec![3.0, 6.0, 3.0, 3.0]]).unwrap();
        let adj = diurnal_adjust(&bumped).unwrap();
        for day in &adj.v_hat {
            assert!((day[1] - day[0]).abs() < 1e-12);
        }
        // Day sums are preserved up to the normalization: Σ_τ n·d(τ)·adj = Σ V̂.
        let f = adj.diurnal_factor.unwrap();
        for (a, b) in adj.v_hat.iter().zip(&bumped.v_hat) {
            let back: f64 = a.iter().zip(&f).map(|(x, d)| x * 4.0 * d).sum();
            assert!((back - b.iter().sum::<f64>()).abs() < 1e-12);
        }
        let short = SpotVariancePath::from_values(0.25, vec![vec![1.0; 4], vec![1.0; 2]]).unwrap();
        assert!(diurnal_adjust(&short).is_err());
    }

    #[test]
    fn pipeline_on_constant_volatility() {
        let n = 2340;
        let delta = 1.0 / n as f64;
        let mut rng = substream(5, &[]);
        let omega2 = 0.25 * delta;
        let days: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                let mut up = omega2.sqrt() * normal(&mut rng);
                (0..n)
                    .map(|_| {
                        let u = omega2.sqrt() * normal(&mut rng);
                        let r = delta.sqrt() * normal(&mut rng) + u - up;
                        up = u;
                        r
                    })
                    .collect()
            })
            .collect();
        let path = estimate_spot_variance(&ReturnSeries { delta_n: delta, days }, &SpotConfig::default()).unwrap();
        assert_eq!(path.cell_count(), 5 * n);
        assert_eq!(path.negative_count, 0);
        let flat = path.flat();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "{mean}");
        let om = path.omega2_hat.iter().flatten().sum::<f64>() / flat.len() as f64;
        assert!((om / omega2 - 1.0).abs() < 0.2, "{om}");
    }
}
