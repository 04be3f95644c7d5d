//! Load-fluctuation screening over the steady-state residue.

use serde::Serialize;

use crate::config::DetectionConfig;
use crate::model::{Event, PowerSeries};
use crate::stage1::ThresholdProfile;

/// First differences of every steady segment, concatenated.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SteadyDiff {
    pub diffs: Vec<f64>,
    /// Original index of the left sample of each difference.
    pub index: Vec<usize>,
    /// Steady segment of each difference.
    pub segment: Vec<usize>,
    /// Steady segments as inclusive original spans.
    pub segments: Vec<(usize, usize)>,
    /// Active power range of each steady segment.
    pub ranges: Vec<f64>,
}

/// Steady segments lie between consecutive events and include the event
/// boundary samples. Differencing is done per segment, so no difference
/// straddles an event.
pub fn build_steady_diff(s: &PowerSeries, events: &[Event]) -> SteadyDiff {
    let p = s.active();
    let mut sorted: Vec<&Event> = events.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut spans = Vec::with_capacity(sorted.len() + 1);
    let mut lo = 0usize;
    for e in &sorted {
        if e.start >= lo {
            spans.push((lo, e.start));
        }
        lo = lo.max(e.end);
    }
    if lo < p.len() {
        spans.push((lo, p.len() - 1));
    }

    let mut out = SteadyDiff::default();
    for (lo, hi) in spans {
        let seg = &p[lo..=hi];
        let k = out.segments.len();
        let (min, max) = seg
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        out.segments.push((lo, hi));
        out.ranges.push(max - min);
        for t in lo..hi {
            out.diffs.push(p[t + 1] - p[t]);
            out.index.push(t);
            out.segment.push(k);
        }
    }
    out
}

/// One analysis window over the concatenated differences.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VadWindow {
    /// Difference positions `[lo, hi)`.
    pub lo: usize,
    pub hi: usize,
    pub energy: f64,
    pub range: f64,
    pub flagged: bool,
    /// Original samples spanned, inclusive.
    pub span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FluctuationSegment {
    /// Difference positions `[lo, hi)`.
    pub lo: usize,
    pub hi: usize,
    /// Original spans, one per steady segment touched.
    pub spans: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FluctuationReport {
    pub windows: Vec<VadWindow>,
    pub segments: Vec<FluctuationSegment>,
}

/// Non-overlapping windows of `vad_window` differences; the last one may be
/// short. Consecutive flagged windows merge into one segment.
pub fn detect_fluctuation_segments(sd: &SteadyDiff, cfg: &DetectionConfig) -> FluctuationReport {
    let nw = cfg.vad_window.max(1);
    let n = sd.diffs.len();
    let mut windows = Vec::with_capacity(n.div_ceil(nw));
    for lo in (0..n).step_by(nw) {
        let hi = (lo + nw).min(n);
        let energy: f64 = sd.diffs[lo..hi].iter().map(|d| d * d).sum();
        let range = sd.segment[lo..hi]
            .iter()
            .map(|&k| sd.ranges[k])
            .fold(0.0, f64::max);
        windows.push(VadWindow {
            lo,
            hi,
            energy,
            range,
            flagged: energy > cfg.lambda1 && range > cfg.lambda2,
            span: (sd.index[lo], sd.index[hi - 1] + 1),
        });
    }

    let mut segments: Vec<FluctuationSegment> = Vec::new();
    let mut prev_flagged = false;
    for w in &windows {
        if w.flagged {
            if prev_flagged {
                segments.last_mut().expect("open segment").hi = w.hi;
            } else {
                segments.push(FluctuationSegment {
                    lo: w.lo,
                    hi: w.hi,
                    spans: Vec::new(),
                });
            }
        }
        prev_flagged = w.flagged;
    }
    for seg in &mut segments {
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for i in seg.lo..seg.hi {
            let (k, t) = (sd.segment[i], sd.index[i]);
            match spans.last_mut() {
                Some(last) if i > seg.lo && sd.segment[i - 1] == k => last.1 = t + 1,
                _ => spans.push((t, t + 1)),
            }
        }
        seg.spans = spans;
    }
    FluctuationReport { windows, segments }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    BelowThreshold,
    Fluctuation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PostprocessOutcome {
    pub kept: Vec<Event>,
    pub removed: Vec<(Event, RemovalReason)>,
}

fn window_of(sd: &SteadyDiff, nw: usize, pos: usize) -> usize {
    debug_assert!(pos < sd.diffs.len());
    pos / nw
}

/// Share of the event's neighbouring steady differences (one window's worth
/// on each side) that fall in flagged windows.
fn fluctuation_share(e: &Event, sd: &SteadyDiff, rep: &FluctuationReport, nw: usize) -> f64 {
    let before_end = sd.index.partition_point(|&t| t < e.start);
    let after_start = sd.index.partition_point(|&t| t < e.end);
    let before = before_end.saturating_sub(nw)..before_end;
    let after = after_start..(after_start + nw).min(sd.diffs.len());
    let total = before.len() + after.len();
    if total == 0 {
        return 0.0;
    }
    let flagged = before
        .chain(after)
        .filter(|&i| rep.windows[window_of(sd, nw, i)].flagged)
        .count();
    flagged as f64 / total as f64
}

pub fn in_fluctuation(e: &Event, sd: &SteadyDiff, rep: &FluctuationReport, cfg: &DetectionConfig) -> bool {
    fluctuation_share(e, sd, rep, cfg.vad_window.max(1)) >= 0.5
}

/// Window ranges whose original spans touch the event's neighbourhood.
pub fn neighbourhood_ranges(e: &Event, rep: &FluctuationReport, w_post: usize) -> Vec<f64> {
    let lo = e.start.saturating_sub(w_post);
    let hi = e.end.saturating_add(w_post);
    rep.windows
        .iter()
        .filter(|w| w.span.0 <= hi && lo <= w.span.1)
        .map(|w| w.range)
        .collect()
}

/// Population mean and standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Drop events below the threshold at their start, and events inside load
/// fluctuation whose change does not stand out from the local ranges.
pub fn remove_unreasonable(
    s: &PowerSeries,
    events: &[Event],
    sd: &SteadyDiff,
    rep: &FluctuationReport,
    th: &ThresholdProfile,
    cfg: &DetectionConfig,
) -> PostprocessOutcome {
    let mut out = PostprocessOutcome::default();
    for e in events {
        let dp = e.delta_p(s).abs();
        let reason = if dp < th.at(e.start) {
            Some(RemovalReason::BelowThreshold)
        } else if in_fluctuation(e, sd, rep, cfg) {
            let ranges = neighbourhood_ranges(e, rep, cfg.w_post);
            if ranges.is_empty() {
                None
            } else {
                let (mu, sigma) = mean_std(&ranges);
                (dp < mu + cfg.eta * sigma).then_some(RemovalReason::Fluctuation)
            }
        } else {
            None
        };
        match reason {
            Some(r) => out.removed.push((*e, r)),
            None => out.kept.push(*e),
        }
    }
    out
}

/// Full post-processing pass over the final events of one series.
pub fn postprocess(
    s: &PowerSeries,
    events: &[Event],
    th: &ThresholdProfile,
    cfg: &DetectionConfig,
) -> (PostprocessOutcome, FluctuationReport) {
    let sd = build_steady_diff(s, events);
    let rep = detect_fluctuation_segments(&sd, cfg);
    (remove_unreasonable(s, events, &sd, &rep, th, cfg), rep)
}
