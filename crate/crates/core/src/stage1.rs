//! First detection stage: adaptive noise threshold and step-like edges.

use crate::config::DetectionConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Event, PowerSeries};
use crate::stats::{mad, MAD_GAUSSIAN_SCALE};

/// Per-sample detection threshold `D_th(t)` in watts.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdProfile {
    values: Vec<f64>,
}

impl ThresholdProfile {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// The same threshold everywhere; handy for synthetic checks.
    pub fn constant(len: usize, value: f64) -> Self {
        Self {
            values: vec![value; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values[t]
    }

    /// Smallest threshold over `[start, end]`.
    pub fn min_over(&self, start: usize, end: usize) -> f64 {
        self.values[start..=end]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_aligned(&self, s: &PowerSeries) -> Result<()> {
        if self.values.len() != s.len() {
            return Err(Error::LengthMismatch {
                what: "threshold profile",
                got: self.values.len(),
                expected: s.len(),
            });
        }
        Ok(())
    }
}

const CHUNK: usize = 4096;

/// `D_th(t) = max(d_min, c * 1.4826 * MAD(|ΔP|))` over the trailing
/// `threshold_window` first differences ending at `t`.
///
/// Samples before the first full window reuse the first full-window value;
/// series shorter than one window use all of their differences.
pub fn adaptive_threshold(
    s: &PowerSeries,
    cfg: &DetectionConfig,
    exec: Execution,
) -> Result<ThresholdProfile> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "adaptive threshold needs at least 2 samples, got {n}"
        )));
    }
    let abs_diff: Vec<f64> = s.active().windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let window = cfg.threshold_window.min(abs_diff.len());
    let first_full = window - 1;
    let scale = cfg.mad_scale * MAD_GAUSSIAN_SCALE;
    let floor = cfg.d_min;

    // One value per difference index at or after the first full window.
    let tail = first_full..abs_diff.len();
    let n_chunks = tail.len().div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = exec.map_range(0..n_chunks, |c| {
        let lo = tail.start + c * CHUNK;
        let hi = (lo + CHUNK).min(tail.end);
        let mut scratch = Vec::with_capacity(window);
        (lo..hi)
            .map(|t| {
                let m = mad(&abs_diff[t + 1 - window..=t], &mut scratch);
                (scale * m).max(floor)
            })
            .collect()
    });
    let per_diff: Vec<f64> = chunks.into_iter().flatten().collect();

    let mut values = Vec::with_capacity(n);
    values.extend(std::iter::repeat_n(per_diff[0], first_full));
    values.extend_from_slice(&per_diff);
    // The last sample has no forward difference of its own.
    values.push(*values.last().expect("non-empty"));
    debug_assert_eq!(values.len(), n);
    Ok(ThresholdProfile { values })
}

/// Maximal runs of same-sign super-threshold differences, one event per run.
///
/// A difference at index `t` (between samples `t` and `t+1`) is a change when
/// `|ΔP| > D_th(t)`. Each run spans from the sample before its first change to
/// the last changed sample. Opposite-sign runs that touch stay separate and
/// share their boundary sample.
pub fn detect_step_events(s: &PowerSeries, th: &ThresholdProfile) -> Result<Vec<Event>> {
    th.check_aligned(s)?;
    let p = s.active();
    let mut events = Vec::new();
    let mut run: Option<(usize, f64)> = None; // (first diff index, sign)
    for t in 0..p.len().saturating_sub(1) {
        let d = p[t + 1] - p[t];
        let sign = if d.abs() > th.at(t) { d.signum() } else { 0.0 };
        match run {
            Some((_, rs)) if sign == rs => {}
            Some((first, _)) => {
                events.push(Event::step(first, t));
                run = (sign != 0.0).then_some((t, sign));
            }
            None if sign != 0.0 => run = Some((t, sign)),
            None => {}
        }
    }
    if let Some((first, _)) = run {
        events.push(Event::step(first, p.len() - 1));
    }
    Ok(events)
}
