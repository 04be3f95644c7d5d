//! Shared domain types: the power series and the events detected on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniformly sampled (1 Hz) active and optional reactive power.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries {
    start_epoch: i64,
    active: Vec<f64>,
    reactive: Option<Vec<f64>>,
}

impl PowerSeries {
    pub const SAMPLE_PERIOD: f64 = 1.0;

    pub fn new(start_epoch: i64, active: Vec<f64>, reactive: Option<Vec<f64>>) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::InsufficientData("power series is empty".into()));
        }
        if let Some(q) = &reactive {
            if q.len() != active.len() {
                return Err(Error::LengthMismatch {
                    what: "reactive power",
                    got: q.len(),
                    expected: active.len(),
                });
            }
        }
        Ok(Self {
            start_epoch,
            active,
            reactive,
        })
    }

    /// Active power only, starting at epoch 0.
    pub fn from_active(active: Vec<f64>) -> Result<Self> {
        Self::new(0, active, None)
    }

    pub fn start_epoch(&self) -> i64 {
        self.start_epoch
    }

    pub fn end_epoch(&self) -> i64 {
        self.start_epoch + self.active.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active(&self) -> &[f64] {
        &self.active
    }

    pub fn reactive(&self) -> Option<&[f64]> {
        self.reactive.as_deref()
    }

    pub fn epoch_at(&self, idx: usize) -> i64 {
        self.start_epoch + idx as i64
    }

    /// Sample index for `epoch`, if it falls inside the series.
    pub fn index_of(&self, epoch: i64) -> Option<usize> {
        let off = epoch - self.start_epoch;
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    /// Copy of the samples in `[start, end]` (inclusive) as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end >= self.len() {
            return Err(Error::OutOfBounds {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(Self {
            start_epoch: self.epoch_at(start),
            active: self.active[start..=end].to_vec(),
            reactive: self.reactive.as_ref().map(|q| q[start..=end].to_vec()),
        })
    }

    /// Sum of absolute first differences of active power over `[start, end]`.
    pub fn total_variation(&self, start: usize, end: usize) -> f64 {
        if end <= start {
            return 0.0;
        }
        self.active[start..=end]
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Single-sample-scale edge from the first detection stage.
    Step,
    /// Sliding-window detection from the second stage.
    LongTransient,
}

/// The feature triple used for motif clustering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventFeatures {
    pub delta_p: f64,
    pub delta_q: f64,
    pub range_p: f64,
}

impl EventFeatures {
    pub fn as_array(&self) -> [f64; 3] {
        [self.delta_p, self.delta_q, self.range_p]
    }
}

/// A transient segment `[start, end]` (both inclusive) of a power series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    pub end: usize,
    /// Window length that produced the event; 1 for step events.
    pub window_len: usize,
    pub stage: Stage,
    pub features: Option<EventFeatures>,
}

impl Event {
    pub fn new(start: usize, end: usize, window_len: usize, stage: Stage) -> Self {
        debug_assert!(start <= end);
        Self {
            start,
            end,
            window_len,
            stage,
            features: None,
        }
    }

    pub fn step(start: usize, end: usize) -> Self {
        Self::new(start, end, 1, Stage::Step)
    }

    /// Number of samples covered, `end - start + 1`.
    pub fn n_samples(&self) -> usize {
        self.end - self.start + 1
    }

    /// Time span in samples, `end - start`.
    pub fn span(&self) -> usize {
        self.end - self.start
    }

    pub fn overlaps(&self, other: &Event) -> bool {
        events_overlap(self, other)
    }

    pub fn with_features(mut self, s: &PowerSeries) -> Result<Self> {
        self.features = Some(event_features(&self, s)?);
        Ok(self)
    }

    /// Net active power change, computing it from `s` if features are absent.
    pub fn delta_p(&self, s: &PowerSeries) -> f64 {
        match self.features {
            Some(f) => f.delta_p,
            None => s.active()[self.end] - s.active()[self.start],
        }
    }

    pub fn check_bounds(&self, len: usize) -> Result<()> {
        if self.start > self.end || self.end >= len {
            return Err(Error::OutOfBounds {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(())
    }
}

/// ΔP, ΔQ between the event endpoints and the active power range over the event.
pub fn event_features(e: &Event, s: &PowerSeries) -> Result<EventFeatures> {
    e.check_bounds(s.len())?;
    let p = &s.active()[e.start..=e.end];
    let delta_p = p[p.len() - 1] - p[0];
    let delta_q = s.reactive().map_or(0.0, |q| q[e.end] - q[e.start]);
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(EventFeatures {
        delta_p,
        delta_q,
        range_p: hi - lo,
    })
}

/// Inclusive interval intersection; a single shared sample counts.
pub fn events_overlap(a: &Event, b: &Event) -> bool {
    a.start <= b.end && b.start <= a.end
}
