//! Trend analysis of candidate events: piecewise linear segmentation,
//! steady/increasing/decreasing labels, and removal of implausible shapes.

use serde::Serialize;

use crate::config::DetectionConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Event, PowerSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendLabel {
    Increasing,
    Decreasing,
    Steady,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrendSegment {
    pub start: usize,
    pub end: usize,
    /// `dp / (end - start)` in W/s.
    pub slope: f64,
    /// `P(end) - P(start)` in W.
    pub dp: f64,
    pub label: TrendLabel,
}

impl TrendSegment {
    pub fn duration(&self) -> f64 {
        (self.end - self.start) as f64
    }
}

/// Top-down piecewise linear split of `p`.
///
/// A span is split at the sample farthest (perpendicular distance, W and s
/// on equal footing) from the chord joining its endpoints, as long as that
/// distance exceeds `tolerance`. Returned spans are ordered; consecutive spans
/// share their boundary sample, so together they cover every first difference
/// exactly once.
pub fn plr_segment(p: &[f64], tolerance: f64) -> Result<Vec<(usize, usize)>> {
    if p.len() < 2 {
        return Err(Error::Degenerate(format!(
            "piecewise linear split needs at least 2 samples, got {}",
            p.len()
        )));
    }
    let mut breaks = vec![0, p.len() - 1];
    let mut stack = vec![(0usize, p.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let dx = (hi - lo) as f64;
        let dy = p[hi] - p[lo];
        let norm = dx.hypot(dy);
        let mut best = (0.0, lo);
        for (i, &v) in p.iter().enumerate().take(hi).skip(lo + 1) {
            let d = (dy * (i - lo) as f64 - dx * (v - p[lo])).abs() / norm;
            if d > best.0 {
                best = (d, i);
            }
        }
        if best.0 > tolerance {
            breaks.push(best.1);
            stack.push((lo, best.1));
            stack.push((best.1, hi));
        }
    }
    breaks.sort_unstable();
    Ok(breaks.windows(2).map(|w| (w[0], w[1])).collect())
}

/// The steady-segment rule; anything not steady takes the sign of `dp`.
pub fn classify_trend(slope: f64, dp: f64, duration: f64, cfg: &DetectionConfig) -> TrendLabel {
    debug_assert!(duration > 0.0);
    let (k, d) = (slope.abs(), dp.abs());
    let steady = k < cfg.k_th1 || d < cfg.dp_th1 || (k < cfg.k_th2 && d < cfg.dp_th2);
    if steady {
        TrendLabel::Steady
    } else if dp > 0.0 {
        TrendLabel::Increasing
    } else {
        TrendLabel::Decreasing
    }
}

/// Label the straight piece `p[start..=end]` (absolute indices).
pub fn label_span(p: &[f64], start: usize, end: usize, cfg: &DetectionConfig) -> TrendSegment {
    let dp = p[end] - p[start];
    let duration = (end - start) as f64;
    let slope = dp / duration;
    TrendSegment {
        start,
        end,
        slope,
        dp,
        label: classify_trend(slope, dp, duration, cfg),
    }
}

/// PLR plus labels for `p[start..=end]`; indices in the result are absolute.
pub fn trend_segments(
    p: &[f64],
    start: usize,
    end: usize,
    cfg: &DetectionConfig,
) -> Result<Vec<TrendSegment>> {
    let spans = plr_segment(&p[start..=end], cfg.plr_tolerance)?;
    Ok(spans
        .into_iter()
        .map(|(a, b)| label_span(p, start + a, start + b, cfg))
        .collect())
}

/// Why an event was judged implausible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnreasonableShape {
    /// First non-steady trend runs against the net change.
    WrongStart,
    /// The counter-trend moves more power than the net-direction trend.
    CounterTrendDominates,
    /// A steady stretch longer than the tolerated duration.
    OverlongSteady,
    /// Last non-steady trend runs against the net change.
    WrongEnd,
}

/// A maximal run of equally labelled trend segments.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TrendRun {
    label: TrendLabel,
    dp: f64,
    duration: f64,
}

fn merge_runs(segments: &[TrendSegment]) -> Vec<TrendRun> {
    let mut runs: Vec<TrendRun> = Vec::new();
    for seg in segments {
        match runs.last_mut() {
            Some(r) if r.label == seg.label => {
                r.dp += seg.dp;
                r.duration += seg.duration();
            }
            _ => runs.push(TrendRun {
                label: seg.label,
                dp: seg.dp,
                duration: seg.duration(),
            }),
        }
    }
    runs
}

/// Match a labelled event against the implausible-shape rules, in order.
pub fn unreasonable_shape(
    segments: &[TrendSegment],
    net_dp: f64,
    cfg: &DetectionConfig,
) -> Option<UnreasonableShape> {
    let runs = merge_runs(segments);
    let (support, against) = if net_dp > 0.0 {
        (TrendLabel::Increasing, TrendLabel::Decreasing)
    } else if net_dp < 0.0 {
        (TrendLabel::Decreasing, TrendLabel::Increasing)
    } else {
        (TrendLabel::Steady, TrendLabel::Steady)
    };
    let mut moving = runs.iter().filter(|r| r.label != TrendLabel::Steady);
    let first = moving.clone().next();
    let last = moving.next_back();
    if against != TrendLabel::Steady {
        if first.is_some_and(|r| r.label == against) {
            return Some(UnreasonableShape::WrongStart);
        }
        let mass = |label| {
            runs.iter()
                .filter(|r| r.label == label)
                .map(|r| r.dp.abs())
                .sum::<f64>()
        };
        if mass(against) > mass(support) {
            return Some(UnreasonableShape::CounterTrendDominates);
        }
    }
    if runs
        .iter()
        .any(|r| r.label == TrendLabel::Steady && r.duration > cfg.dt_steady)
    {
        return Some(UnreasonableShape::OverlongSteady);
    }
    if against != TrendLabel::Steady && last.is_some_and(|r| r.label == against) {
        return Some(UnreasonableShape::WrongEnd);
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Screening {
    pub kept: Vec<Event>,
    pub removed: Vec<(Event, UnreasonableShape)>,
}

/// Split `events` into plausible and implausible shapes.
pub fn screen_events(
    events: &[Event],
    s: &PowerSeries,
    cfg: &DetectionConfig,
    exec: Execution,
) -> Result<Screening> {
    let p = s.active();
    let verdicts = exec.map(events, |e| -> Result<Option<UnreasonableShape>> {
        e.check_bounds(p.len())?;
        if e.start == e.end {
            return Ok(None);
        }
        let segs = trend_segments(p, e.start, e.end, cfg)?;
        Ok(unreasonable_shape(&segs, p[e.end] - p[e.start], cfg))
    });
    let mut out = Screening::default();
    for (e, v) in events.iter().zip(verdicts) {
        match v? {
            None => out.kept.push(*e),
            Some(why) => out.removed.push((*e, why)),
        }
    }
    Ok(out)
}
