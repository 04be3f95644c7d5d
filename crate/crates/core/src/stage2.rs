//! Second detection stage: long transients found by a moving-average plus
//! moving t-test criterion, run once per window length.
//!
//! Detection works on the stretches of the series left between step events.
//! A window pair never straddles a step, so long-transient candidates never
//! intersect the step events they are excluded by.

use crate::config::DetectionConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Event, PowerSeries, Stage};
use crate::stage1::ThresholdProfile;
use crate::stats::{mean, sample_variance, t_critical_two_sided};
use crate::trend::{label_span, plr_segment, TrendLabel, TrendSegment};

/// Means and sample standard deviations of the `w` samples before `t`
/// and the `w` samples starting at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStats {
    pub mean_before: f64,
    pub mean_after: f64,
    pub std_before: f64,
    pub std_after: f64,
}

impl WindowStats {
    pub fn compute(p: &[f64], t: usize, w: usize) -> Result<Self> {
        if w < 2 || t < w || t + w > p.len() {
            return Err(Error::OutOfBounds {
                start: t.saturating_sub(w),
                end: t + w - 1,
                len: p.len(),
            });
        }
        Ok(Self::unchecked(p, t, w))
    }

    fn unchecked(p: &[f64], t: usize, w: usize) -> Self {
        let before = &p[t - w..t];
        let after = &p[t..t + w];
        Self {
            mean_before: mean(before),
            mean_after: mean(after),
            std_before: sample_variance(before).sqrt(),
            std_after: sample_variance(after).sqrt(),
        }
    }

    pub fn mean_diff(&self) -> f64 {
        self.mean_after - self.mean_before
    }

    /// Two-sample t statistic for equal window sizes; `+inf` when both
    /// windows are constant but their means differ.
    pub fn t_statistic(&self, w: usize) -> f64 {
        let diff = self.mean_diff().abs();
        let pooled = (self.std_before.powi(2) + self.std_after.powi(2)) / w as f64;
        if pooled == 0.0 {
            if diff > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            diff / pooled.sqrt()
        }
    }
}

/// The moving t-test criterion for one window length, with its critical
/// value computed once.
#[derive(Clone, Copy, Debug)]
pub struct WindowTest {
    pub w: usize,
    pub critical: f64,
}

impl WindowTest {
    pub fn new(w: usize, alpha: f64) -> Self {
        assert!(w >= 2, "window length must be at least 2");
        Self {
            w,
            critical: t_critical_two_sided(alpha, (2 * w - 2) as f64),
        }
    }

    pub fn fires(&self, stats: &WindowStats, d_th: f64) -> bool {
        stats.mean_diff().abs() > d_th && stats.t_statistic(self.w) > self.critical
    }
}

/// Does the window pair around `t` indicate an event?
pub fn ttest_change_at(s: &PowerSeries, t: usize, w: usize, d_th: f64, alpha: f64) -> Result<bool> {
    let stats = WindowStats::compute(s.active(), t, w)?;
    Ok(WindowTest::new(w, alpha).fires(&stats, d_th))
}

fn window_is_steady(p: &[f64], start: usize, end: usize, cfg: &DetectionConfig) -> bool {
    label_span(p, start, end, cfg).label == TrendLabel::Steady
}

/// Coarse bounds of the event behind a run of triggers, inside `[lo, hi]`.
///
/// From the strongest trigger, walk back to the latest sample whose trailing
/// length-`w` window is steady and forward to the earliest sample whose
/// leading window is steady. The walk gives up `clamp_factor * w` samples
/// from the strongest trigger.
fn localize_within(
    p: &[f64],
    (lo, hi): (usize, usize),
    (first, last): (usize, usize),
    w: usize,
    cfg: &DetectionConfig,
) -> (usize, usize) {
    let reach = cfg.clamp_factor * w;
    let peak = (first..=last)
        .filter(|&t| t >= lo + w && t + w <= hi + 1)
        .max_by(|&a, &b| {
            let da = WindowStats::unchecked(p, a, w).mean_diff().abs();
            let db = WindowStats::unchecked(p, b, w).mean_diff().abs();
            // Prefer the earlier sample on ties.
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or((first + last) / 2)
        .clamp(lo + 1, hi);

    let back_limit = peak.saturating_sub(1 + reach).max(lo + w - 1);
    let start = (back_limit..peak)
        .rev()
        .find(|&s| window_is_steady(p, s + 1 - w, s, cfg))
        .unwrap_or_else(|| peak.saturating_sub(reach).max(lo));

    let fwd_limit = (peak + reach).min((hi + 1).saturating_sub(w));
    let end = (peak..=fwd_limit)
        .find(|&s| s + w <= hi + 1 && window_is_steady(p, s, s + w - 1, cfg))
        .unwrap_or_else(|| (peak + reach).min(hi));
    (start.min(peak - 1), end.max(peak))
}

/// Coarse event bounds for a run of triggers `trigger_span` on the whole series.
pub fn localize_event_bounds(
    s: &PowerSeries,
    trigger_span: (usize, usize),
    w: usize,
    cfg: &DetectionConfig,
) -> (usize, usize) {
    assert!(trigger_span.0 <= trigger_span.1, "empty trigger span");
    localize_within(s.active(), (0, s.len() - 1), trigger_span, w, cfg)
}

/// One stretch of the series between step events, with its piecewise
/// linear breakdown.
#[derive(Clone, Debug)]
struct Stretch {
    lo: usize,
    hi: usize,
    pieces: Vec<TrendSegment>,
}

/// Shared, window-independent state for running the detector under many
/// window lengths over the same series.
#[derive(Clone, Debug)]
pub struct Stage2Context<'a> {
    series: &'a PowerSeries,
    threshold: &'a ThresholdProfile,
    cfg: &'a DetectionConfig,
    stretches: Vec<Stretch>,
}

impl<'a> Stage2Context<'a> {
    pub fn new(
        series: &'a PowerSeries,
        exclusions: &[Event],
        threshold: &'a ThresholdProfile,
        cfg: &'a DetectionConfig,
        exec: Execution,
    ) -> Result<Self> {
        if threshold.len() != series.len() {
            return Err(Error::LengthMismatch {
                what: "threshold profile",
                got: threshold.len(),
                expected: series.len(),
            });
        }
        let mut spans: Vec<(usize, usize)> = exclusions.iter().map(|e| (e.start, e.end)).collect();
        spans.sort_unstable();
        let mut bounds = Vec::new();
        let mut cursor = 0usize;
        for (a, b) in spans {
            if a > cursor {
                bounds.push((cursor, a - 1));
            }
            cursor = cursor.max(b + 1);
        }
        if cursor < series.len() {
            bounds.push((cursor, series.len() - 1));
        }
        let p = series.active();
        let stretches = exec
            .map(&bounds, |&(lo, hi)| -> Result<Stretch> {
                let pieces = if hi > lo {
                    plr_segment(&p[lo..=hi], cfg.plr_tolerance)?
                        .into_iter()
                        .map(|(a, b)| label_span(p, lo + a, lo + b, cfg))
                        .collect()
                } else {
                    Vec::new()
                };
                Ok(Stretch { lo, hi, pieces })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            series,
            threshold,
            cfg,
            stretches,
        })
    }

    /// Long-transient candidates for one window length.
    pub fn detect(&self, w: usize, exec: Execution) -> Vec<Event> {
        let test = WindowTest::new(w, self.cfg.t_test_alpha);
        let per_stretch = exec.map(&self.stretches, |st| self.detect_in(st, &test));
        let mut events: Vec<Event> = per_stretch.into_iter().flatten().collect();
        events.sort_by_key(|e| (e.start, e.end));
        events
    }

    fn detect_in(&self, st: &Stretch, test: &WindowTest) -> Vec<Event> {
        let p = self.series.active();
        let w = test.w;
        if st.hi + 1 < st.lo + 2 * w {
            return Vec::new();
        }
        let (t_lo, t_hi) = (st.lo + w, st.hi + 1 - w);
        let mut groups = Vec::new();
        let mut open: Option<usize> = None;
        for t in t_lo..=t_hi {
            let stats = WindowStats::unchecked(p, t, w);
            let fires = test.fires(&stats, self.threshold.at(t));
            match (fires, open) {
                (true, None) => open = Some(t),
                (false, Some(first)) => {
                    groups.push((first, t - 1));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(first) = open {
            groups.push((first, t_hi));
        }

        let mut events: Vec<Event> = Vec::with_capacity(groups.len());
        for g in groups {
            let coarse = localize_within(p, (st.lo, st.hi), g, w, self.cfg);
            let (start, end) = snap_to_pieces(&st.pieces, coarse);
            match events.last_mut() {
                Some(prev) if prev.end >= start => prev.end = prev.end.max(end),
                _ => events.push(Event::new(start, end, w, Stage::LongTransient)),
            }
        }
        events.retain(|e| {
            e.end > e.start
                && (p[e.end] - p[e.start]).abs() > self.threshold.min_over(e.start, e.end)
        });
        events
    }
}

/// Tighten coarse bounds to the stretch's linear pieces: take every piece
/// sharing a difference with `[start, end]`, then drop steady pieces from
/// both ends. Falls back to the coarse bounds when nothing but steady
/// pieces remain.
fn snap_to_pieces(pieces: &[TrendSegment], (start, end): (usize, usize)) -> (usize, usize) {
    let first = pieces.partition_point(|pc| pc.end <= start);
    let last = pieces.partition_point(|pc| pc.start < end);
    if first >= last {
        return (start, end);
    }
    let hit = &pieces[first..last];
    let Some(a) = hit.iter().position(|pc| pc.label != TrendLabel::Steady) else {
        return (start, end);
    };
    let b = hit
        .iter()
        .rposition(|pc| pc.label != TrendLabel::Steady)
        .expect("a non-steady piece exists");
    (hit[a].start, hit[b].end)
}

/// Long-transient events of one window length, avoiding `exclusions`.
pub fn detect_long_transients(
    s: &PowerSeries,
    w: usize,
    exclusions: &[Event],
    th: &ThresholdProfile,
    cfg: &DetectionConfig,
) -> Result<Vec<Event>> {
    let ctx = Stage2Context::new(s, exclusions, th, cfg, Execution::Sequential)?;
    Ok(ctx.detect(w, Execution::Sequential))
}
