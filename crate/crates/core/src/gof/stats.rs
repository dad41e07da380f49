//! Realized Kolmogorov-Smirnov and weighted L² distances, p-values and
//! bootstrap reports.

use super::marginal::Cdf;
use crate::error::{Error, Result};
use crate::redf::Redf;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// √T·sup|F_{n,T} − F₀|.
    Rks,
    /// T·∫(F_{n,T} − F₀)² dF₀.
    Cvm,
    /// T·∫(F_{n,T} − F₀)²/(F₀(1 − F₀)) dF₀.
    Ad,
}

impl std::str::FromStr for StatKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rks" | "ks" => Ok(StatKind::Rks),
            "cvm" | "rl2" => Ok(StatKind::Cvm),
            "ad" => Ok(StatKind::Ad),
            _ => Err(Error::invalid(format!("unknown statistic '{s}'"))),
        }
    }
}

/// Value of a statistic plus a flag for Anderson-Darling clipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatValue {
    pub value: f64,
    pub clipped: bool,
}

/// Exact sup over the step function, checking each atom from both sides.
/// For a discontinuous F₀ the sup is taken over the REDF atoms only.
///
/// Atom ranges whose monotone bounds cannot beat the running maximum are
/// skipped, so F₀ is evaluated on a small subset of the atoms.
pub fn rks<C: Cdf + ?Sized>(redf: &Redf, f0: &C, horizon: f64) -> f64 {
    let atoms = redf.support();
    let m = atoms.len();
    let mut cache = vec![f64::NAN; m];
    let eval = |i: usize, cache: &mut Vec<f64>| {
        if cache[i].is_nan() {
            cache[i] = f0.cdf(atoms[i]);
        }
        cache[i]
    };
    let continuous = f0.is_continuous();
    let term = |i: usize, u: f64| {
        let u_left = if continuous { u } else { f0.left_limit(atoms[i]) };
        (redf.value_at_atom(i) - u).abs().max((redf.left_limit_at_atom(i) - u_left).abs())
    };
    let mut best = 0.0f64;
    // Coarse pass for a good initial bound.
    let stride = (m / 256).max(1);
    let mut knots: Vec<usize> = (0..m).step_by(stride).collect();
    if *knots.last().expect("nonempty") != m - 1 {
        knots.push(m - 1);
    }
    for &i in &knots {
        let u = eval(i, &mut cache);
        best = best.max(term(i, u));
    }
    let mut stack: Vec<(usize, usize)> = knots.windows(2).map(|w| (w[0], w[1])).collect();
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (ulo, uhi) = (cache[lo], cache[hi]);
        // F₀ and its left limits inside (lo, hi) lie in [F₀(v_lo), F₀(v_hi)].
        let bound = (redf.value_at_atom(hi) - ulo).max(uhi - redf.left_limit_at_atom(lo));
        if bound <= best {
            continue;
        }
        let mid = lo + (hi - lo) / 2;
        let u = eval(mid, &mut cache);
        best = best.max(term(mid, u));
        stack.push((lo, mid));
        stack.push((mid, hi));
    }
    horizon.sqrt() * best
}

/// Images u_k = F₀(v_k) of the atoms and the step heights F_k.
fn images<C: Cdf + ?Sized>(redf: &Redf, f0: &C) -> (Vec<f64>, Vec<f64>) {
    let u = f0.cdf_sorted(redf.support());
    let f = (0..u.len()).map(|i| redf.value_at_atom(i)).collect();
    (u, f)
}

/// T·∫₀¹(F_{n,T}(F₀⁻¹(u)) − u)² du, integrated exactly between atom images.
pub fn cvm<C: Cdf + ?Sized>(redf: &Redf, f0: &C, horizon: f64) -> f64 {
    let (u, f) = images(redf, f0);
    let cube = |x: f64| x * x * x;
    // [0, u_0) has F = 0.
    let mut total = cube(u[0]) / 3.0;
    for k in 0..u.len() {
        let next = if k + 1 < u.len() { u[k + 1] } else { 1.0 };
        total += (cube(next - f[k]) - cube(u[k] - f[k])) / 3.0;
    }
    horizon * total.max(0.0)
}

/// Anderson-Darling weight, integrated in closed form on [ε, 1 − ε].
pub fn ad<C: Cdf + ?Sized>(redf: &Redf, f0: &C, horizon: f64) -> StatValue {
    const EPS: f64 = 1e-10;
    let (u, f) = images(redf, f0);
    let clipped = u.first().is_some_and(|&x| x < EPS) || u.last().is_some_and(|&x| x > 1.0 - EPS);
    // Antiderivative of (F − u)²/(u(1 − u)).
    let anti = |fk: f64, x: f64| fk * fk * x.ln() - (1.0 - fk).powi(2) * (1.0 - x).ln() - x;
    let clip = |x: f64| x.clamp(EPS, 1.0 - EPS);
    let mut total = 0.0;
    let mut piece = |fk: f64, a: f64, b: f64| {
        let (a, b) = (clip(a), clip(b));
        if b > a {
            total += anti(fk, b) - anti(fk, a);
        }
    };
    piece(0.0, 0.0, u[0]);
    for k in 0..u.len() {
        let next = if k + 1 < u.len() { u[k + 1] } else { 1.0 };
        piece(f[k], u[k], next);
    }
    StatValue { value: horizon * total.max(0.0), clipped }
}

pub fn statistic<C: Cdf + ?Sized>(kind: StatKind, redf: &Redf, f0: &C, horizon: f64) -> StatValue {
    match kind {
        StatKind::Rks => StatValue { value: rks(redf, f0, horizon), clipped: false },
        StatKind::Cvm => StatValue { value: cvm(redf, f0, horizon), clipped: false },
        StatKind::Ad => ad(redf, f0, horizon),
    }
}

/// (1 + #{replicates ≥ observed}) / (B + 1).
pub fn pvalue(observed: f64, replicates: &[f64]) -> Result<f64> {
    if replicates.is_empty() {
        return Err(Error::Empty("bootstrap replicates".into()));
    }
    let exceed = replicates.iter().filter(|&&r| r >= observed).count();
    Ok((1 + exceed) as f64 / (replicates.len() + 1) as f64)
}

/// The ⌈(1 − α)B⌉-th order statistic of the replicates.
pub fn critical_value(replicates: &[f64], alpha: f64) -> Result<f64> {
    if replicates.is_empty() {
        return Err(Error::Empty("bootstrap replicates".into()));
    }
    let mut s = replicates.to_vec();
    s.sort_by(f64::total_cmp);
    let b = s.len();
    let idx = (((1.0 - alpha) * b as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(s[idx.min(b) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fixed,
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValues {
    #[serde(rename = "0.10")]
    pub a10: f64,
    #[serde(rename = "0.05")]
    pub a05: f64,
    #[serde(rename = "0.01")]
    pub a01: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub statistic: StatKind,
    pub observed: f64,
    pub replicates: Vec<f64>,
    pub critical_values: CriticalValues,
    pub p_value: f64,
    pub b: usize,
    pub seed: u64,
    pub provenance: Provenance,
    pub null: super::NullMarginal,
    /// Replicates lost to simulation or re-estimation failures.
    pub dropped: usize,
    pub flags: Vec<String>,
}

impl GofReport {
    pub fn new(
        statistic: StatKind,
        observed: f64,
        replicates: Vec<f64>,
        seed: u64,
        provenance: Provenance,
        null: super::NullMarginal,
        dropped: usize,
    ) -> Result<Self> {
        let critical_values = CriticalValues {
            a10: critical_value(&replicates, 0.10)?,
            a05: critical_value(&replicates, 0.05)?,
            a01: critical_value(&replicates, 0.01)?,
        };
        let p_value = pvalue(observed, &replicates)?;
        let requested = replicates.len() + dropped;
        let mut flags = Vec::new();
        if dropped as f64 > 0.05 * requested as f64 {
            flags.push(format!("{dropped} of {requested} replicates dropped"));
        }
        Ok(Self {
            statistic,
            observed,
            b: replicates.len(),
            replicates,
            critical_values,
            p_value,
            seed,
            provenance,
            null,
            dropped,
            flags,
        })
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}
