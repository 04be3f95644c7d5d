//! CSV input and output for power series, labels and detected events.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Event, PowerSeries, Stage};

/// Longest run of missing samples that is filled by interpolation.
pub const MAX_FILL_GAP: i64 = 5;

/// Column names of a power CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvSchema {
    pub timestamp: String,
    pub active: String,
    /// Read when present in the header.
    pub reactive: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            active: "active".into(),
            reactive: Some("reactive".into()),
        }
    }
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Seconds since the epoch from an integer, a decimal, or an ISO-8601 stamp
/// (naive stamps are read as UTC).
pub fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<i64>() {
        return Some(v as f64);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let secs = |sec: i64, nanos: u32| sec as f64 + f64::from(nanos) * 1e-9;
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(secs(dt.timestamp(), dt.timestamp_subsec_nanos()));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            let dt = dt.and_utc();
            return Some(secs(dt.timestamp(), dt.timestamp_subsec_nanos()));
        }
    }
    None
}

struct Row {
    t: f64,
    p: f64,
    q: Option<f64>,
}

fn read_rows(path: &Path, schema: &CsvSchema) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let ti = col(&schema.timestamp).ok_or_else(|| parse_error(path, 1, format!("missing column `{}`", schema.timestamp)))?;
    let pi = col(&schema.active).ok_or_else(|| parse_error(path, 1, format!("missing column `{}`", schema.active)))?;
    let qi = schema.reactive.as_deref().and_then(col);

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).ok_or_else(|| parse_error(path, line, "short row"));
        let t = parse_timestamp(field(ti)?).ok_or_else(|| parse_error(path, line, format!("bad timestamp `{}`", &rec[ti])))?;
        let num = |i: usize| -> Result<f64> {
            let raw = field(i)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(path, line, format!("bad number `{raw}`")))
        };
        rows.push(Row {
            t,
            p: num(pi)?,
            q: qi.map(num).transpose()?,
        });
    }
    Ok(rows)
}

/// Collapse rows onto whole seconds. Rows sharing an exact timestamp keep
/// the last one; distinct timestamps within a second are averaged.
fn bucket(rows: Vec<Row>) -> BTreeMap<i64, (f64, Option<f64>)> {
    let mut exact: BTreeMap<u64, Row> = BTreeMap::new();
    for r in rows {
        // Order-preserving key for finite floats.
        let bits = r.t.to_bits();
        let key = if r.t.is_sign_negative() { !bits } else { bits | (1 << 63) };
        exact.insert(key, r);
    }
    let mut sums: BTreeMap<i64, (f64, f64, usize, bool)> = BTreeMap::new();
    for r in exact.into_values() {
        let e = sums.entry(r.t.floor() as i64).or_insert((0.0, 0.0, 0, true));
        e.0 += r.p;
        e.1 += r.q.unwrap_or(0.0);
        e.2 += 1;
        e.3 &= r.q.is_some();
    }
    sums.into_iter()
        .map(|(t, (p, q, n, has_q))| (t, (p / n as f64, has_q.then_some(q / n as f64))))
        .collect()
}

/// Load a power CSV as 1 Hz series. Short gaps are interpolated; longer ones
/// start a new series.
pub fn load_power_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<PowerSeries>> {
    let rows = read_rows(path, schema)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let has_q = rows.iter().all(|r| r.q.is_some());
    let buckets = bucket(rows);

    let mut out = Vec::new();
    let mut cur: Option<(i64, Vec<f64>, Vec<f64>)> = None;
    let mut last: Option<(i64, f64, f64)> = None;
    for (t, (p, q)) in buckets {
        let q = q.unwrap_or(0.0);
        match (&mut cur, last) {
            (Some((_, ps, qs)), Some((lt, lp, lq))) if t - lt - 1 <= MAX_FILL_GAP => {
                let span = (t - lt) as f64;
                for k in 1..(t - lt) {
                    let f = k as f64 / span;
                    ps.push(lp + f * (p - lp));
                    qs.push(lq + f * (q - lq));
                }
                ps.push(p);
                qs.push(q);
            }
            _ => {
                if let Some((t0, ps, qs)) = cur.take() {
                    out.push(PowerSeries::new(t0, ps, has_q.then_some(qs))?);
                }
                cur = Some((t, vec![p], vec![q]));
            }
        }
        last = Some((t, p, q));
    }
    if let Some((t0, ps, qs)) = cur {
        out.push(PowerSeries::new(t0, ps, has_q.then_some(qs))?);
    }
    Ok(out)
}

pub fn write_power_csv(path: &Path, s: &PowerSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match s.reactive() {
        Some(q) => {
            writeln!(w, "timestamp,active,reactive")?;
            for (i, (p, q)) in s.active().iter().zip(q).enumerate() {
                writeln!(w, "{},{p},{q}", s.epoch_at(i))?;
            }
        }
        None => {
            writeln!(w, "timestamp,active")?;
            for (i, p) in s.active().iter().enumerate() {
                writeln!(w, "{},{p}", s.epoch_at(i))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    On,
    Off,
    Transition,
}

/// One ground-truth event, in epoch seconds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    #[serde(rename = "start")]
    pub start_epoch: i64,
    #[serde(rename = "end")]
    pub end_epoch: i64,
    pub appliance: String,
    pub direction: Direction,
}

impl LabelRecord {
    /// The label as an event on `s`, or `None` when it is not fully inside.
    pub fn to_event(&self, s: &PowerSeries) -> Option<Event> {
        let a = s.index_of(self.start_epoch)?;
        let b = s.index_of(self.end_epoch)?;
        Some(Event::new(a, b, 1, Stage::Step))
    }
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<LabelRecord>() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        if rec.end_epoch < rec.start_epoch {
            return Err(Error::Validation(format!(
                "label `{}` ends at {} before it starts at {}",
                rec.appliance, rec.end_epoch, rec.start_epoch
            )));
        }
        out.push(rec);
    }
    out.sort_by_key(|r| (r.start_epoch, r.end_epoch));
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for l in labels {
        w.serialize(l)?;
    }
    w.flush()?;
    Ok(())
}

/// One line of detector output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub start_epoch: i64,
    pub end_epoch: i64,
    pub delta_p: f64,
    pub delta_q: f64,
    pub range_p: f64,
    pub window_len: usize,
    pub stage: Stage,
}

impl EventRecord {
    pub fn from_event(e: &Event, s: &PowerSeries) -> Result<Self> {
        let f = match e.features {
            Some(f) => f,
            None => crate::model::event_features(e, s)?,
        };
        Ok(Self {
            start_epoch: s.epoch_at(e.start),
            end_epoch: s.epoch_at(e.end),
            delta_p: f.delta_p,
            delta_q: f.delta_q,
            range_p: f.range_p,
            window_len: e.window_len,
            stage: e.stage,
        })
    }

    pub fn to_event(&self, s: &PowerSeries) -> Option<Event> {
        let a = s.index_of(self.start_epoch)?;
        let b = s.index_of(self.end_epoch)?;
        Some(Event::new(a, b, self.window_len, self.stage))
    }
}

pub fn write_events_jsonl<W: Write>(mut w: W, records: &[EventRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_events_jsonl(path: &Path) -> Result<Vec<EventRecord>> {
    let rdr = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in rdr.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}
