//! End-to-end detection over one series.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::DetectionConfig;
use crate::error::Result;
use crate::exec::Execution;
use crate::model::{Event, PowerSeries};
use crate::motif::{audit_areas, mine_events, AreaAudit};
use crate::postprocess::{postprocess, FluctuationReport, RemovalReason};
use crate::stage1::{adaptive_threshold, detect_step_events, ThresholdProfile};
use crate::stage2::Stage2Context;
use crate::trend::{screen_events, UnreasonableShape};

/// Mining summary of one day.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DayReport {
    pub day: i64,
    pub pool: usize,
    pub motifs: usize,
    pub emitted: usize,
    /// Motif of each emitted event, if any.
    pub assignments: Vec<(Event, Option<usize>)>,
    pub areas: Vec<AreaAudit>,
}

/// Intermediate results, kept for the debug dump.
#[derive(Clone, Debug, Default, Serialize)]
pub struct DebugInfo {
    pub threshold: Vec<f64>,
    pub steps: Vec<Event>,
    pub candidates_per_window: BTreeMap<usize, usize>,
    pub screened_out: Vec<(Event, UnreasonableShape)>,
    pub days: Vec<DayReport>,
    pub before_postprocess: Vec<Event>,
    pub fluctuation: Option<FluctuationReport>,
    pub removed: Vec<(Event, RemovalReason)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Detection {
    /// Final events, ascending and pairwise disjoint.
    pub events: Vec<Event>,
    pub debug: DebugInfo,
}

/// Day number of each sample, counting from the epoch.
fn day_of(s: &PowerSeries, idx: usize, cfg: &DetectionConfig) -> i64 {
    (s.epoch_at(idx) + cfg.day_offset).div_euclid(cfg.day_length as i64)
}

/// Long-transient candidates of every window length, trend-screened and
/// carrying features.
pub fn long_candidates(
    s: &PowerSeries,
    steps: &[Event],
    th: &ThresholdProfile,
    cfg: &DetectionConfig,
    exec: Execution,
    debug: &mut DebugInfo,
) -> Result<Vec<Event>> {
    let ctx = Stage2Context::new(s, steps, th, cfg, exec)?;
    let per_window = exec.map(&cfg.window_set, |&w| ctx.detect(w, exec));
    let mut raw = Vec::new();
    for (&w, evs) in cfg.window_set.iter().zip(per_window) {
        debug.candidates_per_window.insert(w, evs.len());
        raw.extend(evs);
    }
    let screened = screen_events(&raw, s, cfg, exec)?;
    debug.screened_out = screened.removed;
    screened.kept.into_iter().map(|e| e.with_features(s)).collect()
}

/// Resolve competing candidates day by day. Each day is decided with the
/// candidates of that day and the `n_days - 1` days before it; only events
/// starting on the day itself are emitted.
pub fn mine_by_day(
    s: &PowerSeries,
    pool: &[Event],
    cfg: &DetectionConfig,
    exec: Execution,
    debug: &mut DebugInfo,
) -> Result<Vec<Event>> {
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let days: Vec<i64> = pool.iter().map(|e| day_of(s, e.start, cfg)).collect();
    let mut distinct = days.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let span = cfg.n_days.max(1) as i64;

    let outcomes = exec.map(&distinct, |&d| -> Result<(Vec<Event>, DayReport)> {
        let buffer: Vec<Event> = pool
            .iter()
            .zip(&days)
            .filter(|&(_, &k)| k > d - span && k <= d)
            .map(|(e, _)| *e)
            .collect();
        let mining = mine_events(&buffer, cfg, exec)?;
        let motif_of = mining.motif_of(buffer.len());
        let assignments: Vec<(Event, Option<usize>)> = mining
            .kept
            .iter()
            .map(|&i| (buffer[i], motif_of[i]))
            .filter(|(e, _)| day_of(s, e.start, cfg) == d)
            .collect();
        let emitted: Vec<Event> = assignments.iter().map(|a| a.0).collect();
        let report = DayReport {
            day: d,
            pool: buffer.len(),
            motifs: mining.motifs.len(),
            emitted: emitted.len(),
            assignments,
            areas: audit_areas(&mining, &buffer)
                .into_iter()
                .filter(|a| day_of(s, a.start, cfg) == d)
                .collect(),
        };
        Ok((emitted, report))
    });

    let mut out = Vec::new();
    for r in outcomes {
        let (evs, report) = r?;
        out.extend(evs);
        debug.days.push(report);
    }
    Ok(out)
}

/// Keep the earliest of any events that still collide, e.g. across a day
/// boundary.
fn drop_collisions(mut events: Vec<Event>) -> Vec<Event> {
    events.sort_by_key(|e| (e.start, e.end, e.window_len));
    let mut out: Vec<Event> = Vec::with_capacity(events.len());
    for e in events {
        match out.last() {
            Some(prev) if prev.overlaps(&e) && !(prev.end == e.start && prev.window_len == 1 && e.window_len == 1) => {}
            _ => out.push(e),
        }
    }
    out
}

/// Run every stage on one series.
pub fn run_detect(s: &PowerSeries, cfg: &DetectionConfig, exec: Execution) -> Result<Detection> {
    cfg.validate()?;
    if s.len() < 2 {
        return Ok(Detection::default());
    }
    let mut debug = DebugInfo::default();
    let th = adaptive_threshold(s, cfg, exec)?;
    let steps = detect_step_events(s, &th)?;
    let candidates = long_candidates(s, &steps, &th, cfg, exec, &mut debug)?;
    log::debug!("{} step events, {} long-transient candidates", steps.len(), candidates.len());

    // Steps join the mining pool only when a long candidate overlaps them.
    let (contested, free_steps): (Vec<Event>, Vec<Event>) = steps
        .iter()
        .partition(|st| candidates.iter().any(|c| c.overlaps(st)));
    let mut pool = candidates;
    for st in contested {
        pool.push(st.with_features(s)?);
    }
    let mined = mine_by_day(s, &pool, cfg, exec, &mut debug)?;

    let mut events = free_steps;
    events.extend(mined);
    let events = drop_collisions(events);
    log::debug!("{} events after motif mining", events.len());

    let events = if cfg.postprocess {
        let (out, rep) = postprocess(s, &events, &th, cfg);
        debug.before_postprocess = events;
        debug.fluctuation = Some(rep);
        log::debug!("post-processing removed {} events", out.removed.len());
        debug.removed = out.removed;
        out.kept
    } else {
        events
    };
    debug.threshold = th.values().to_vec();
    debug.steps = steps;
    Ok(Detection { events, debug })
}
