//! Module invariants as property checks over the public API.

use std::collections::BTreeSet;
use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtevent_core::evaluate::{evaluate, prf_scores, OvlMatrix};
use mtevent_core::ingest::{load_power_csv, write_events_jsonl, write_power_csv, CsvSchema, EventRecord, MAX_FILL_GAP};
use mtevent_core::motif::mdl::{enumerate_motif_groups, find_overlap_areas, resolve_competitions, MdlModel, Motif};
use mtevent_core::pipeline::run_detect;
use mtevent_core::postprocess::{build_steady_diff, detect_fluctuation_segments, postprocess, FluctuationReport};
use mtevent_core::stage1::{adaptive_threshold, detect_step_events, ThresholdProfile};
use mtevent_core::stage2::Stage2Context;
use mtevent_core::synth::{synth_generate, ApplianceKind, ApplianceSpec, SynthSpec};
use mtevent_core::trend::{classify_trend, plr_segment, screen_events, TrendLabel};
use mtevent_core::{event_features, events_overlap, DetectionConfig, Event, Execution, PowerSeries, Stage};

use crate::oracles;
use crate::tournament::{check, random_instance, Instance};

pub const CASES: u32 = 128;

pub struct Suite {
    pub results: Vec<(&'static str, Result<(), String>)>,
}

impl Suite {
    fn run<S>(&mut self, name: &'static str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
    where
        S: Strategy,
        S::Value: Debug,
    {
        let mut runner = TestRunner::new(Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        });
        let r = runner.run(&strategy, test).map_err(|e| e.to_string());
        self.results.push((name, r));
    }
}

fn series(p: Vec<f64>) -> PowerSeries {
    PowerSeries::from_active(p).unwrap()
}

fn step_levels() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..6, -40.0f64..40.0), 20..300).prop_map(|steps| {
        let mut level = 500.0;
        steps
            .into_iter()
            .map(|(kind, jitter)| {
                if kind == 0 {
                    level += jitter * 20.0;
                }
                level + jitter * 0.1
            })
            .collect()
    })
}

fn ramps() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec((-200.0f64..200.0, 5usize..80, 5usize..40), 2..8),
        prop::collection::vec(-1.0f64..1.0, 64),
    )
        .prop_map(|(levels, jitter)| {
            let mut p = Vec::new();
            let mut level = 500.0;
            for (k, (dl, hold, rise)) in levels.iter().enumerate() {
                for j in 0..*rise {
                    p.push(level + dl * j as f64 / *rise as f64 + jitter[(k * 20 + j) % 64]);
                }
                level += dl;
                for j in 0..*hold {
                    p.push(level + jitter[(j * 7 + k) % 64]);
                }
            }
            p
        })
}

/// Level changes marked as step events, with optional wander between them.
fn stepped_with_wander() -> impl Strategy<Value = (Vec<f64>, Vec<Event>)> {
    (200usize..600, any::<u64>(), 0.0f64..15.0).prop_map(|(n, seed, amp)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Vec::with_capacity(n);
        let mut level = 100.0;
        let mut events = Vec::new();
        for t in 0..n {
            if t > 5 && t + 5 < n && rng.random_bool(0.01) {
                level += rng.random_range(-300.0..300.0);
                events.push(Event::step(t - 1, t));
            }
            p.push(level + rng.random_range(-amp..=amp));
        }
        (p, events)
    })
}

/// Sorted cut points paired up into disjoint events.
fn disjoint(cuts: &BTreeSet<usize>) -> Vec<Event> {
    let c: Vec<usize> = cuts.iter().copied().collect();
    c.chunks_exact(2).map(|w| Event::step(w[0], w[1])).collect()
}

fn core_model(suite: &mut Suite) {
    suite.run(
        "core-model: features are unchanged by a time shift",
        (
            prop::collection::vec(-2000.0f64..2000.0, 20..80),
            prop::collection::vec(-2000.0f64..2000.0, 0..30),
            0usize..20,
            0usize..30,
        ),
        |(p, pre, a, len)| {
            let q: Vec<f64> = p.iter().map(|x| 0.3 * x).collect();
            let s = PowerSeries::new(0, p.clone(), Some(q.clone())).unwrap();
            let shifted = PowerSeries::new(
                0,
                pre.iter().chain(&p).copied().collect(),
                Some(pre.iter().map(|x| 0.3 * x).chain(q).collect()),
            )
            .unwrap();
            let e = Event::new(a, (a + len).min(p.len() - 1), 5, Stage::LongTransient);
            let k = pre.len();
            let e2 = Event::new(e.start + k, e.end + k, 5, Stage::LongTransient);
            prop_assert_eq!(event_features(&e, &s).unwrap(), event_features(&e2, &shifted).unwrap());
            Ok(())
        },
    );
    suite.run(
        "core-model: overlap is symmetric and reflexive",
        (0usize..100, 0usize..20, 0usize..100, 0usize..20),
        |(a, la, b, lb)| {
            let x = Event::step(a, a + la);
            let y = Event::step(b, b + lb);
            prop_assert_eq!(events_overlap(&x, &y), events_overlap(&y, &x));
            prop_assert!(events_overlap(&x, &x));
            Ok(())
        },
    );
    suite.run(
        "core-model: a constant offset leaves delta_p and range_p unchanged",
        (prop::collection::vec(-2000.0f64..2000.0, 2..80), -1e4f64..1e4, any::<prop::sample::Index>()),
        |(p, c, i)| {
            let s = series(p.clone());
            let s2 = series(p.iter().map(|x| x + c).collect());
            let a = i.index(p.len() - 1);
            let e = Event::step(a, p.len() - 1);
            let (f, g) = (event_features(&e, &s).unwrap(), event_features(&e, &s2).unwrap());
            let tol = 1e-12 * (4000.0 + c.abs());
            prop_assert!((f.delta_p - g.delta_p).abs() <= tol);
            prop_assert!((f.range_p - g.range_p).abs() <= tol);
            Ok(())
        },
    );
}

fn ingestion(suite: &mut Suite) {
    suite.run(
        "ingestion: CSV write then load is the identity",
        (
            prop::collection::vec(-5e3f64..5e3, 1..200),
            any::<bool>(),
            0i64..2_000_000_000,
        ),
        |(p, with_q, t0)| {
            let q = with_q.then(|| p.iter().map(|x| x * 0.25 - 3.0).collect());
            let s = PowerSeries::new(t0, p, q).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_power_csv(f.path(), &s).unwrap();
            let back = load_power_csv(f.path(), &CsvSchema::default()).unwrap();
            prop_assert_eq!(back, vec![s]);
            Ok(())
        },
    );
    suite.run(
        "ingestion: loaded series are gapless and split only at long gaps",
        prop::collection::vec((1i64..10, -500.0f64..500.0), 1..150),
        |rows| {
            let mut t = 1_700_000_000i64;
            let mut body = String::from("timestamp,active\n");
            let mut stamps = Vec::new();
            for (gap, p) in rows {
                t += gap;
                stamps.push(t);
                body.push_str(&format!("{t},{p}\n"));
            }
            let f = tempfile::NamedTempFile::new().unwrap();
            std::fs::write(f.path(), body).unwrap();
            let out = load_power_csv(f.path(), &CsvSchema::default()).unwrap();
            for s in &out {
                prop_assert_eq!((s.end_epoch() - s.start_epoch() + 1) as usize, s.len());
            }
            for w in out.windows(2) {
                prop_assert!(w[1].start_epoch() - w[0].end_epoch() - 1 > MAX_FILL_GAP);
            }
            for ts in stamps {
                prop_assert!(out.iter().any(|s| s.index_of(ts).is_some()));
            }
            Ok(())
        },
    );
}

fn stage1(suite: &mut Suite) {
    suite.run(
        "detect-stage1: events are disjoint and exceed the threshold",
        step_levels(),
        |p| {
            let s = series(p);
            let th = adaptive_threshold(&s, &DetectionConfig::default(), Execution::Sequential).unwrap();
            let ev = detect_step_events(&s, &th).unwrap();
            let p = s.active();
            for w in ev.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
                if w[0].end == w[1].start {
                    // Opposite-sign runs may share their boundary sample.
                    let d0 = p[w[0].end] - p[w[0].start];
                    let d1 = p[w[1].end] - p[w[1].start];
                    prop_assert!(d0 * d1 < 0.0);
                }
            }
            for e in &ev {
                prop_assert!((p[e.end] - p[e.start]).abs() > th.min_over(e.start, e.end));
            }
            Ok(())
        },
    );
    suite.run(
        "detect-stage1: scaling the series scales thresholds and keeps changes",
        (step_levels(), 1.5f64..4.0),
        |(p, alpha)| {
            let cfg = DetectionConfig {
                d_min: 1e-9,
                ..DetectionConfig::default()
            };
            let s = series(p.clone());
            let s2 = series(p.iter().map(|x| x * alpha).collect());
            let th = adaptive_threshold(&s, &cfg, Execution::Sequential).unwrap();
            let th2 = adaptive_threshold(&s2, &cfg, Execution::Sequential).unwrap();
            for t in 0..s.len() {
                if th.at(t) > 1e-6 {
                    prop_assert!(oracles::rel_close(th.at(t) * alpha, th2.at(t), 1e-9));
                }
            }
            let knife = s.active().windows(2).enumerate().any(|(t, w)| {
                let d = (w[1] - w[0]).abs();
                (d - th.at(t)).abs() < 1e-6 * th.at(t).max(1.0)
            });
            if !knife {
                prop_assert_eq!(detect_step_events(&s, &th).unwrap(), detect_step_events(&s2, &th2).unwrap());
            }
            Ok(())
        },
    );
}

fn stage2(suite: &mut Suite) {
    suite.run(
        "detect-stage2: per-window events are disjoint, above threshold, offset-free and deterministic",
        (ramps(), -1000.0f64..1000.0, prop::sample::select(vec![5usize, 10, 15, 20, 25, 30, 60])),
        |(p, offset, w)| {
            let cfg = DetectionConfig::default();
            let s = series(p.clone());
            let s2 = series(p.iter().map(|x| x + offset).collect());
            let th = ThresholdProfile::constant(p.len(), 15.0);
            let run = |s: &PowerSeries, exec| Stage2Context::new(s, &[], &th, &cfg, exec).unwrap().detect(w, exec);
            let ev = run(&s, Execution::Sequential);
            for pair in ev.windows(2) {
                prop_assert!(pair[0].end < pair[1].start);
            }
            for e in &ev {
                prop_assert!((p[e.end] - p[e.start]).abs() > th.min_over(e.start, e.end));
            }
            let spans = |v: &[Event]| v.iter().map(|e| (e.start, e.end)).collect::<Vec<_>>();
            prop_assert_eq!(spans(&ev), spans(&run(&s2, Execution::Sequential)));
            prop_assert_eq!(&ev, &run(&s, Execution::Sequential));
            prop_assert_eq!(&ev, &run(&s, Execution::Parallel));
            Ok(())
        },
    );
}

fn trend(suite: &mut Suite) {
    suite.run(
        "trend-filter: PLR pieces partition the input",
        prop::collection::vec(-300.0f64..300.0, 2..200),
        |p| {
            let spans = plr_segment(&p, 5.0).unwrap();
            prop_assert_eq!(spans[0].0, 0);
            prop_assert_eq!(spans.last().unwrap().1, p.len() - 1);
            for w in spans.windows(2) {
                prop_assert!(w[0].0 < w[0].1);
                prop_assert_eq!(w[0].1, w[1].0);
            }
            Ok(())
        },
    );
    suite.run(
        "trend-filter: trend labels flip with the sign",
        (-20.0f64..20.0, -500.0f64..500.0, 0.5f64..100.0),
        |(slope, dp, dur)| {
            let cfg = DetectionConfig::default();
            let flipped = match classify_trend(slope, dp, dur, &cfg) {
                TrendLabel::Increasing => TrendLabel::Decreasing,
                TrendLabel::Decreasing => TrendLabel::Increasing,
                TrendLabel::Steady => TrendLabel::Steady,
            };
            prop_assert_eq!(classify_trend(-slope, -dp, dur, &cfg), flipped);
            Ok(())
        },
    );
    suite.run(
        "trend-filter: short strictly monotone events are never screened out",
        (prop::collection::vec(0.5f64..200.0, 1..10), any::<bool>()),
        |(incs, rising)| {
            let mut p = vec![1000.0];
            for d in &incs {
                let last = *p.last().unwrap();
                p.push(if rising { last + d } else { last - d });
            }
            let n = p.len();
            let s = series(p);
            let e = Event::new(0, n - 1, 5, Stage::LongTransient);
            let out = screen_events(&[e], &s, &DetectionConfig::default(), Execution::Sequential).unwrap();
            prop_assert_eq!(out.kept.len(), 1);
            Ok(())
        },
    );
}

fn motif(suite: &mut Suite) {
    suite.run(
        "motif-mdl: tournament matches exhaustive search; kept events disjoint per area",
        any::<u64>(),
        |seed| {
            let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4);
            check(&inst).map_err(TestCaseError::fail)?;
            Ok(())
        },
    );
    suite.run(
        "motif-mdl: description lengths match integer arithmetic",
        any::<u64>(),
        |seed| {
            let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4);
            let events = inst.events();
            let motifs = inst.motif_list();
            let (areas, _) = find_overlap_areas(&events);
            let oracle_areas = oracles::overlap_areas(&inst.spans);
            let model = MdlModel::new(&events, &motifs, &areas);
            for g in enumerate_motif_groups(&model, 20, Execution::Sequential).unwrap() {
                let want = oracles::dl_group(&inst.spans, &inst.motifs, &g.motifs).to_f64();
                prop_assert!(oracles::rel_close(model.dl_group(&g.motifs), want, 1e-12));
                let want = oracles::dl_areas(&inst.spans, &inst.motifs, &oracle_areas, &g.areas, &g.motifs);
                prop_assert_eq!(model.dl_areas_given_group(&g.areas, &g.motifs), want as f64);
            }
            Ok(())
        },
    );
    suite.run(
        "motif-mdl: a motif absent from every area changes nothing",
        (any::<u64>(), prop::collection::vec(3usize..300, 1..6)),
        |(seed, lens)| {
            let inst = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), 5, 4);
            let mut spans = inst.spans.clone();
            let mut extra = Vec::new();
            for (j, len) in lens.iter().enumerate() {
                let a = 900_000 + 1000 * j;
                extra.push(spans.len());
                spans.push((a, a + len));
            }
            let mut motifs = inst.motifs.clone();
            motifs.push(extra.clone());
            let bigger = Instance { spans, motifs };
            let resolve = |inst: &Instance| {
                let events = inst.events();
                let motifs: Vec<Motif> = inst.motif_list();
                let (areas, free) = find_overlap_areas(&events);
                let model = MdlModel::new(&events, &motifs, &areas);
                let groups = enumerate_motif_groups(&model, 20, Execution::Sequential).unwrap();
                let res = resolve_competitions(&model, &groups, &free);
                let winners: Vec<Option<Vec<usize>>> =
                    res.winners.iter().map(|w| w.map(|g| groups[g].motifs.clone())).collect();
                (res.events, winners)
            };
            let (a, wa) = resolve(&inst);
            let (mut b, wb) = resolve(&bigger);
            b.retain(|e| !extra.contains(e));
            prop_assert_eq!(a, b);
            prop_assert_eq!(wa, wb);
            Ok(())
        },
    );
}

fn covered(r: &FluctuationReport) -> usize {
    r.segments.iter().map(|g| g.hi - g.lo).sum()
}

fn postprocessing(suite: &mut Suite) {
    suite.run(
        "postprocess: steady differences never cross an event",
        stepped_with_wander(),
        |(p, events)| {
            let sd = build_steady_diff(&series(p), &events);
            for &t in &sd.index {
                for e in &events {
                    prop_assert!(t < e.start || t >= e.end);
                }
            }
            Ok(())
        },
    );
    suite.run(
        "postprocess: raising either lambda flags no new window and covers no more",
        (stepped_with_wander(), 0.0f64..200.0, 0.0f64..20.0),
        |((p, events), dl1, dl2)| {
            let sd = build_steady_diff(&series(p), &events);
            let cfg = DetectionConfig::default();
            let hi = DetectionConfig {
                lambda1: cfg.lambda1 + dl1,
                lambda2: cfg.lambda2 + dl2,
                ..cfg.clone()
            };
            let a = detect_fluctuation_segments(&sd, &cfg);
            let b = detect_fluctuation_segments(&sd, &hi);
            for (x, y) in a.windows.iter().zip(&b.windows) {
                prop_assert!(!y.flagged || x.flagged);
            }
            prop_assert!(covered(&b) <= covered(&a));
            Ok(())
        },
    );
    suite.run(
        "postprocess: removals never shrink as eta grows",
        (stepped_with_wander(), 0.0f64..5.0, 0.0f64..5.0),
        |((p, events), eta, extra)| {
            let s = series(p);
            let th = ThresholdProfile::constant(s.len(), 15.0);
            let lo = DetectionConfig {
                eta,
                ..DetectionConfig::default()
            };
            let hi = DetectionConfig {
                eta: eta + extra,
                ..DetectionConfig::default()
            };
            let (a, _) = postprocess(&s, &events, &th, &lo);
            let (b, _) = postprocess(&s, &events, &th, &hi);
            for (e, _) in &a.removed {
                prop_assert!(b.removed.iter().any(|r| r.0 == *e));
            }
            Ok(())
        },
    );
}

fn evaluation(suite: &mut Suite) {
    suite.run(
        "evaluate: overlap coefficient lies in [0, 1] and is symmetric for equal variation",
        (prop::collection::vec(-500.0f64..500.0, 30..80), 0usize..30, 0usize..20, 0usize..30, 0usize..20),
        |(p, a, la, b, lb)| {
            let s = series(p);
            let d = Event::step(a, (a + la).min(s.len() - 1));
            let g = Event::step(b, (b + lb).min(s.len() - 1));
            let e = mtevent_core::evaluate::overlap_coefficient(&d, &g, &s);
            prop_assert!((0.0..=1.0).contains(&e));
            if s.total_variation(d.start, d.end) == s.total_variation(g.start, g.end) {
                prop_assert_eq!(e, mtevent_core::evaluate::overlap_coefficient(&g, &d, &s));
            }
            Ok(())
        },
    );
    suite.run(
        "evaluate: one-to-one matches give TP <= min(n_d, n_t)",
        (1usize..8, 1usize..8, any::<u64>()),
        |(nd, nt, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cols: Vec<usize> = (0..nt).collect();
            for i in (1..cols.len()).rev() {
                cols.swap(i, rng.random_range(0..=i));
            }
            let mut raw = vec![0.0; nd * nt];
            for i in 0..nd.min(nt) {
                if rng.random_bool(0.8) {
                    raw[i * nt + cols[i]] = rng.random_range(0.01..=1.0);
                }
            }
            let m = OvlMatrix::from_raw(nd, nt, raw, 0.8, 0.1);
            prop_assert!(m.true_positive() <= nd.min(nt) as f64);
            Ok(())
        },
    );
    suite.run(
        "evaluate: F1 is at most 1, and 1 exactly for perfect one-to-one matches",
        (
            prop::collection::vec(-500.0f64..500.0, 30..80),
            prop::collection::btree_set(0usize..30, 0..12),
            prop::collection::btree_set(0usize..30, 0..12),
        ),
        |(p, dc, gc)| {
            let s = series(p);
            let dets = disjoint(&dc);
            let gts = disjoint(&gc);
            let cfg = DetectionConfig::default();
            let r = evaluate(&dets, &gts, &s, &cfg, Execution::Sequential);
            prop_assert!(r.f1_mod <= 1.0);
            let m = mtevent_core::evaluate::build_match_matrix(&dets, &gts, &s, &cfg, Execution::Sequential);
            let contributing: Vec<(usize, usize)> = (0..m.n_d)
                .flat_map(|i| (0..m.n_t).map(move |j| (i, j)))
                .filter(|&(i, j)| m.at(i, j) > 0.0)
                .collect();
            let rows: BTreeSet<usize> = contributing.iter().map(|c| c.0).collect();
            let cols: BTreeSet<usize> = contributing.iter().map(|c| c.1).collect();
            let perfect = m.n_d == m.n_t
                && m.n_d > 0
                && contributing.len() == m.n_d
                && rows.len() == m.n_d
                && cols.len() == m.n_t
                && contributing.iter().all(|&(i, j)| m.at(i, j) == 1.0);
            prop_assert_eq!(prf_scores(&m).f1 == 1.0, perfect);
            Ok(())
        },
    );
}

fn pipeline(suite: &mut Suite) {
    suite.run(
        "pipeline: fixed seed and config give byte-identical output",
        (any::<u64>(), 3000usize..6000, 100.0f64..2000.0, 5usize..120),
        |(seed, duration, power, transient)| {
            let spec = SynthSpec {
                duration,
                seed,
                noise: 1.0,
                start_epoch: 1_700_006_400,
                base_load: 100.0,
                min_spacing: 100,
                day_length: 86_400,
                appliances: vec![
                    ApplianceSpec {
                        name: "heater".into(),
                        kind: ApplianceKind::Step,
                        power: vec![power],
                        transient: 0,
                        on_duration: 300,
                        stagger: 3,
                        stair: 10.0,
                        stair_hold: 2,
                        amplitude: 0.0,
                        q_ratio: 0.1,
                        starts: vec![500],
                        per_day: 0,
                    },
                    ApplianceSpec {
                        name: "ac".into(),
                        kind: ApplianceKind::Ramp,
                        power: vec![power / 2.0],
                        transient,
                        on_duration: 400,
                        stagger: 3,
                        stair: 10.0,
                        stair_hold: 2,
                        amplitude: 0.0,
                        q_ratio: 0.3,
                        starts: vec![1500],
                        per_day: 0,
                    },
                ],
            };
            let s = synth_generate(&spec).unwrap().series;
            let bytes = |exec| {
                let det = run_detect(&s, &DetectionConfig::default(), exec).unwrap();
                let recs: Vec<EventRecord> = det.events.iter().map(|e| EventRecord::from_event(e, &s).unwrap()).collect();
                let mut out = Vec::new();
                write_events_jsonl(&mut out, &recs).unwrap();
                out
            };
            let a = bytes(Execution::Parallel);
            prop_assert_eq!(&a, &bytes(Execution::Parallel));
            prop_assert_eq!(&a, &bytes(Execution::Sequential));
            Ok(())
        },
    );
}

pub fn run_all() -> Suite {
    let mut suite = Suite { results: Vec::new() };
    core_model(&mut suite);
    ingestion(&mut suite);
    stage1(&mut suite);
    stage2(&mut suite);
    trend(&mut suite);
    motif(&mut suite);
    postprocessing(&mut suite);
    evaluation(&mut suite);
    pipeline(&mut suite);
    suite
}
