//! Tick ingestion: CSV parsing, cleaning, previous-tick alignment to an
//! equidistant grid, and per-day log-returns.
//!
//! Time is measured in sessions: one full trading session is one time unit,
//! so the grid spacing `delta_n` is `grid_seconds / session_seconds`.

use crate::error::{Error, Result};
use chrono::{NaiveDateTime, Timelike};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// Ticks of one session, times in seconds relative to the session start.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDay {
    pub label: String,
    pub times: Vec<f64>,
    pub prices: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTickFile {
    pub days: Vec<RawDay>,
}

impl RawTickFile {
    pub fn tick_count(&self) -> usize {
        self.days.iter().map(|d| d.times.len()).sum()
    }
}

/// Session window. `start_of_day` only matters for ISO-8601 timestamps,
/// which are converted to seconds after the session start.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBounds {
    pub start_of_day: f64,
    pub length: f64,
    /// Per-day session lengths for shortened sessions, keyed by day label.
    pub early_close: BTreeMap<String, f64>,
}

impl SessionBounds {
    pub fn new(start_of_day: f64, end_of_day: f64) -> Result<Self> {
        if !(end_of_day > start_of_day) || start_of_day < 0.0 {
            return Err(Error::invalid(format!(
                "session end {end_of_day} must be after start {start_of_day}"
            )));
        }
        Ok(Self {
            start_of_day,
            length: end_of_day - start_of_day,
            early_close: BTreeMap::new(),
        })
    }

    /// 09:30 to 16:00.
    pub fn us_equity() -> Self {
        Self::new(9.5 * 3600.0, 16.0 * 3600.0).expect("valid bounds")
    }

    fn length_for(&self, label: &str) -> f64 {
        self.early_close.get(label).copied().unwrap_or(self.length)
    }
}

/// Parses `HH:MM[:SS]` into seconds after midnight.
pub fn parse_clock(s: &str) -> Result<f64> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(Error::invalid(format!("bad clock time '{s}'")));
    }
    let mut secs = 0.0;
    for (i, p) in parts.iter().enumerate() {
        let v: f64 = p
            .parse()
            .map_err(|_| Error::invalid(format!("bad clock time '{s}'")))?;
        secs += v * [3600.0, 60.0, 1.0][i];
    }
    Ok(secs)
}

enum Stamp {
    Seconds(f64),
    Iso(String, f64),
}

fn parse_stamp(s: &str) -> Option<Stamp> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(Stamp::Seconds(v));
    }
    let formats = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"];
    let trimmed = s.trim_end_matches('Z');
    for f in formats {
        if let Ok(dt) = NaiveDateTime::parse_from_str(trimmed, f) {
            let t = dt.time();
            let secs = t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9;
            return Some(Stamp::Iso(dt.date().to_string(), secs));
        }
    }
    None
}

/// Reads a tick CSV with header `timestamp,price` or `day,timestamp,price`.
///
/// Timestamps are either seconds after the session start or ISO-8601 date-times.
/// With `strict`, a non-positive price is an error; otherwise such rows are
/// dropped (see [`clean_ticks`] for the remaining cleaning rule).
pub fn read_ticks<R: Read>(reader: R, session: &SessionBounds, strict: bool) -> Result<RawTickFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let ts_col = col("timestamp").ok_or_else(|| Error::Parse {
        row: 0,
        msg: "missing 'timestamp' column".into(),
    })?;
    let price_col = col("price").ok_or_else(|| Error::Parse {
        row: 0,
        msg: "missing 'price' column".into(),
    })?;
    let day_col = col("day");

    let mut days: Vec<RawDay> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let field = |c: usize| rec.get(c).ok_or_else(|| Error::Parse { row, msg: "short row".into() });
        let price: f64 = field(price_col)?
            .parse()
            .map_err(|_| Error::Parse { row, msg: format!("unparseable price '{}'", &rec[price_col]) })?;
        if !price.is_finite() {
            return Err(Error::Parse { row, msg: "non-finite price".into() });
        }
        let stamp = parse_stamp(field(ts_col)?)
            .ok_or_else(|| Error::Parse { row, msg: format!("unparseable timestamp '{}'", &rec[ts_col]) })?;
        let (label, time) = match stamp {
            Stamp::Seconds(t) => (day_col.map(|c| rec[c].to_string()).unwrap_or_else(|| "0".into()), t),
            Stamp::Iso(date, secs) => (
                day_col.map(|c| rec[c].to_string()).unwrap_or(date),
                secs - session.start_of_day,
            ),
        };
        if price <= 0.0 {
            if strict {
                return Err(Error::Parse { row, msg: format!("non-positive price {price}") });
            }
            continue;
        }
        match days.last_mut() {
            Some(d) if d.label == label => {
                if time < *d.times.last().expect("nonempty day") {
                    return Err(Error::Parse { row, msg: "timestamps decrease within a day".into() });
                }
                d.times.push(time);
                d.prices.push(price);
            }
            _ => {
                if days.iter().any(|d| d.label == label) {
                    return Err(Error::Parse { row, msg: format!("day '{label}' is not contiguous") });
                }
                days.push(RawDay { label, times: vec![time], prices: vec![price] });
            }
        }
    }
    if days.is_empty() {
        return Err(Error::Empty("tick file has no rows".into()));
    }
    Ok(RawTickFile { days })
}

/// Drops ticks whose price deviates from the rolling median of the
/// surrounding `window` ticks by more than `n_sd` standard deviations of the
/// day's median deviations. Returns the cleaned file and the number dropped.
pub fn clean_ticks(raw: &RawTickFile, window: usize, n_sd: f64) -> (RawTickFile, usize) {
    let mut dropped = 0;
    let mut out = RawTickFile::default();
    for day in &raw.days {
        let n = day.prices.len();
        let half = window / 2;
        let mut dev = Vec::with_capacity(n);
        let mut buf = Vec::with_capacity(window);
        for i in 0..n {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            buf.clear();
            buf.extend((lo..hi).filter(|&j| j != i).map(|j| day.prices[j]));
            if buf.is_empty() {
                dev.push(0.0);
                continue;
            }
            buf.sort_by(f64::total_cmp);
            let m = buf.len();
            let median = if m % 2 == 1 { buf[m / 2] } else { 0.5 * (buf[m / 2 - 1] + buf[m / 2]) };
            dev.push(day.prices[i] - median);
        }
        let mean = dev.iter().sum::<f64>() / n as f64;
        let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut kept = RawDay { label: day.label.clone(), times: vec![], prices: vec![] };
        for i in 0..n {
            if sd > 0.0 && (dev[i] - mean).abs() > n_sd * sd {
                dropped += 1;
            } else {
                kept.times.push(day.times[i]);
                kept.prices.push(day.prices[i]);
            }
        }
        if !kept.times.is_empty() {
            out.days.push(kept);
        }
    }
    (out, dropped)
}

/// Log-prices on an equidistant grid, one vector of `n_d + 1` points per day.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub t0: f64,
    pub delta_n: f64,
    pub days: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    /// Share of grid points carrying a fresh tick, per day.
    pub effective_sample: Vec<f64>,
    /// Days with no tick at or before the session start (forward-filled).
    pub flagged: Vec<bool>,
}

impl TickSeries {
    /// Builds a series from already-gridded per-day log-prices.
    pub fn from_days(delta_n: f64, days: Vec<Vec<f64>>) -> Result<Self> {
        if !(delta_n > 0.0) {
            return Err(Error::invalid("delta_n must be positive"));
        }
        if days.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("log-prices must be finite"));
        }
        let k = days.len();
        Ok(Self {
            t0: 0.0,
            delta_n,
            labels: (0..k).map(|d| d.to_string()).collect(),
            effective_sample: vec![1.0; k],
            flagged: vec![false; k],
            days,
        })
    }

    pub fn day_count(&self) -> usize {
        self.days.len()
    }

    /// Number of returns in day `d`.
    pub fn returns_in_day(&self, d: usize) -> usize {
        self.days[d].len().saturating_sub(1)
    }
}

/// Previous-tick interpolation of `raw` onto a grid of `grid_seconds`.
///
/// Grid point `i` of a day carries the log of the last trade at or before
/// `i * grid_seconds` after the session start. A day without a tick at or
/// before the session start is forward-filled from its first tick and flagged.
pub fn pretick(raw: &RawTickFile, grid_seconds: f64, session: &SessionBounds) -> Result<TickSeries> {
    if raw.days.is_empty() || raw.tick_count() == 0 {
        return Err(Error::Empty("no ticks".into()));
    }
    if !(grid_seconds > 0.0) || grid_seconds > session.length {
        return Err(Error::invalid(format!("grid spacing {grid_seconds}s does not fit the session")));
    }
    let delta_n = grid_seconds / session.length;
    let mut out = TickSeries {
        t0: session.start_of_day,
        delta_n,
        days: Vec::with_capacity(raw.days.len()),
        labels: Vec::with_capacity(raw.days.len()),
        effective_sample: Vec::with_capacity(raw.days.len()),
        flagged: Vec::with_capacity(raw.days.len()),
    };
    for day in &raw.days {
        if day.prices.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::invalid(format!("day {}: non-positive price", day.label)));
        }
        let n = (session.length_for(&day.label) / grid_seconds).round() as usize;
        if n == 0 {
            return Err(Error::invalid(format!("day {}: session shorter than one grid step", day.label)));
        }
        let mut values = Vec::with_capacity(n + 1);
        let mut fresh = 0usize;
        let mut last: Option<usize> = None;
        let mut cursor = 0usize;
        let flagged = day.times[0] > 0.0;
        for i in 0..=n {
            let t = i as f64 * grid_seconds;
            // Tolerate rounding of timestamps produced from the same grid.
            let cutoff = t + 1e-9 * grid_seconds;
            while cursor < day.times.len() && day.times[cursor] <= cutoff {
                cursor += 1;
            }
            let idx = cursor.saturating_sub(1);
            if last != Some(idx) {
                fresh += 1;
            }
            last = Some(idx);
            values.push(day.prices[idx].ln());
        }
        out.effective_sample.push(fresh as f64 / (n + 1) as f64);
        out.flagged.push(flagged);
        out.labels.push(day.label.clone());
        out.days.push(values);
    }
    Ok(out)
}

/// Per-day increments of the log-price grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub delta_n: f64,
    pub days: Vec<Vec<f64>>,
}

impl ReturnSeries {
    pub fn total_len(&self) -> usize {
        self.days.iter().map(Vec::len).sum()
    }

    /// Per-day cumulative sums starting from `start[d]`; inverse of [`log_returns`].
    pub fn integrate(&self, start: &[f64]) -> Vec<Vec<f64>> {
        self.days
            .iter()
            .zip(start)
            .map(|(r, &s0)| {
                let mut acc = s0;
                std::iter::once(s0)
                    .chain(r.iter().map(|x| {
                        acc += x;
                        acc
                    }))
                    .collect()
            })
            .collect()
    }
}

/// First differences of the log-price within each day. Never produces an
/// overnight return.
pub fn log_returns(ticks: &TickSeries) -> Result<ReturnSeries> {
    let mut days = Vec::with_capacity(ticks.days.len());
    for (d, v) in ticks.days.iter().enumerate() {
        if v.len() < 2 {
            return Err(Error::insufficient(format!("day {d} has fewer than two grid points")));
        }
        days.push(v.windows(2).map(|w| w[1] - w[0]).collect());
    }
    Ok(ReturnSeries { delta_n: ticks.delta_n, days })
}

/// Writes the grid as CSV with columns `day,i,log_price`.
pub fn write_grid_csv<W: Write>(w: W, ticks: &TickSeries) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["day", "i", "log_price"])?;
    for (d, day) in ticks.days.iter().enumerate() {
        for (i, v) in day.iter().enumerate() {
            wr.write_record([d.to_string(), i.to_string(), format!("{v:.17e}")])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a `day,i,log_price[,...]` CSV. Extra columns are ignored.
pub fn read_grid_csv<R: Read>(r: R, delta_n: f64) -> Result<TickSeries> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { row: 0, msg: format!("missing '{name}' column") })
    };
    let (dc, ic, pc) = (col("day")?, col("i")?, col("log_price")?);
    let mut days: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        let parse = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse { row, msg: format!("bad value in column {c}") })
        };
        let d = parse(dc)? as usize;
        let i = parse(ic)? as usize;
        let v = parse(pc)?;
        if d == days.len() {
            days.push(Vec::new());
        }
        let day = days
            .get_mut(d)
            .filter(|day| day.len() == i)
            .ok_or_else(|| Error::Parse { row, msg: "rows must be ordered by (day, i)".into() })?;
        day.push(v);
    }
    if days.is_empty() {
        return Err(Error::Empty("grid file has no rows".into()));
    }
    TickSeries::from_days(delta_n, days)
}
