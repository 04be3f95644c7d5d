//! Seeded synthetic households with exact ground-truth events.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Direction, LabelRecord};
use crate::model::PowerSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceKind {
    /// Instant switching. Several levels switch `stagger` seconds apart.
    Step,
    /// Stairs of `stair` watts every `stair_hold` seconds, one event overall.
    MultiStep,
    /// Linear rise over `transient` seconds.
    Ramp,
    /// Switches like a step appliance and wanders inside a band while on.
    Fluctuating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceSpec {
    pub name: String,
    pub kind: ApplianceKind,
    /// Power levels (W). Only `Step` uses more than one.
    pub power: Vec<f64>,
    /// Rise time of a ramp (s).
    #[serde(default)]
    pub transient: usize,
    /// Time from the end of switching on to switching off (s).
    pub on_duration: usize,
    #[serde(default = "default_stagger")]
    pub stagger: usize,
    #[serde(default = "default_stair")]
    pub stair: f64,
    #[serde(default = "default_stair_hold")]
    pub stair_hold: usize,
    /// Half-width of the wander band of a fluctuating load (W).
    #[serde(default)]
    pub amplitude: f64,
    /// Reactive power as a share of active power.
    #[serde(default)]
    pub q_ratio: f64,
    /// Explicit switch-on times (s from the series start).
    #[serde(default)]
    pub starts: Vec<usize>,
    /// Random switch-on times: this many per day.
    #[serde(default)]
    pub per_day: usize,
}

fn default_stagger() -> usize {
    3
}
fn default_stair() -> f64 {
    10.0
}
fn default_stair_hold() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub duration: usize,
    pub seed: u64,
    /// Standard deviation of the additive Gaussian noise (W).
    pub noise: f64,
    #[serde(default)]
    pub start_epoch: i64,
    #[serde(default = "default_base")]
    pub base_load: f64,
    /// Smallest gap (s) kept between transitions of randomly placed runs.
    #[serde(default = "default_spacing")]
    pub min_spacing: usize,
    #[serde(default = "default_day")]
    pub day_length: usize,
    pub appliances: Vec<ApplianceSpec>,
}

fn default_base() -> f64 {
    100.0
}
fn default_spacing() -> usize {
    200
}
fn default_day() -> usize {
    86_400
}

impl SynthSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// One labelled transition within a run, relative to the run start.
struct Transition {
    /// Offset of the first changed sample.
    at: usize,
    /// Samples taken to settle (1 for a step).
    len: usize,
    direction: Direction,
}

/// Active power profile of one run, from switch-on to after switch-off,
/// plus its labelled transitions.
fn run_profile(a: &ApplianceSpec) -> Result<(Vec<f64>, Vec<Transition>)> {
    let total: f64 = a.power.iter().sum();
    let mut prof = Vec::new();
    let mut tr = Vec::new();
    match a.kind {
        ApplianceKind::Step | ApplianceKind::Fluctuating => {
            let mut level = 0.0;
            for (k, &p) in a.power.iter().enumerate() {
                let gap = if k + 1 < a.power.len() { a.stagger } else { 0 };
                tr.push(Transition {
                    at: prof.len(),
                    len: 1,
                    direction: Direction::On,
                });
                level += p;
                prof.extend(std::iter::repeat_n(level, gap));
            }
        }
        ApplianceKind::Ramp => {
            if a.transient == 0 {
                return Err(Error::Validation(format!("ramp `{}` needs a transient", a.name)));
            }
            tr.push(Transition {
                at: 0,
                len: a.transient,
                direction: Direction::On,
            });
            let d = a.transient as f64;
            prof.extend((1..a.transient).map(|k| total * k as f64 / d));
        }
        ApplianceKind::MultiStep => {
            if a.stair <= 0.0 || a.stair_hold == 0 {
                return Err(Error::Validation(format!("multi-step `{}` needs stairs", a.name)));
            }
            let n = (total / a.stair).ceil() as usize;
            let mut level = 0.0;
            for _ in 0..n.saturating_sub(1) {
                level = (level + a.stair).min(total);
                prof.extend(std::iter::repeat_n(level, a.stair_hold));
            }
            tr.push(Transition {
                at: 0,
                len: prof.len() + 1,
                direction: Direction::On,
            });
        }
    }
    prof.extend(std::iter::repeat_n(total, a.on_duration));
    // Switching off mirrors the staggered on-levels for step loads and is a
    // single drop otherwise.
    let mut level = total;
    let offs: Vec<f64> = match a.kind {
        ApplianceKind::Step | ApplianceKind::Fluctuating => a.power.iter().rev().copied().collect(),
        _ => vec![total],
    };
    for (k, &p) in offs.iter().enumerate() {
        tr.push(Transition {
            at: prof.len(),
            len: 1,
            direction: Direction::Off,
        });
        level -= p;
        let gap = if k + 1 < offs.len() { a.stagger } else { 0 };
        prof.extend(std::iter::repeat_n(level, gap));
    }
    Ok((prof, tr))
}

/// Samples `[from, to)` occupied by a run's transitions, with `pad` either side.
fn busy(start: usize, tr: &[Transition], pad: usize) -> Vec<(usize, usize)> {
    tr.iter()
        .map(|t| ((start + t.at).saturating_sub(1 + pad), start + t.at + t.len + pad))
        .collect()
}

fn collides(a: &[(usize, usize)], b: &[(usize, usize)]) -> bool {
    a.iter().any(|x| b.iter().any(|y| x.0 < y.1 && y.0 < x.1))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub series: PowerSeries,
    pub labels: Vec<LabelRecord>,
    /// Noise-free active power.
    pub clean: Vec<f64>,
}

/// Superpose every scheduled run on the base load and add noise.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    if spec.duration < 2 {
        return Err(Error::Validation("duration must be at least 2 s".into()));
    }
    if spec.noise.is_nan() || spec.noise < 0.0 {
        return Err(Error::Validation("noise must be non-negative".into()));
    }
    let n = spec.duration;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut p = vec![spec.base_load; n];
    let mut q = vec![0.0; n];
    let mut labels = Vec::new();
    let mut occupied: Vec<(usize, usize)> = Vec::new();
    let mut runs: Vec<(usize, usize, Vec<f64>)> = Vec::new();

    let profiles = spec
        .appliances
        .iter()
        .map(run_profile)
        .collect::<Result<Vec<_>>>()?;

    // Explicit schedules first, then random placement around them.
    for (ai, a) in spec.appliances.iter().enumerate() {
        let (prof, tr) = &profiles[ai];
        for &s in &a.starts {
            if s == 0 || s + prof.len() > n {
                return Err(Error::Validation(format!(
                    "`{}` run at {s} needs samples up to {} but the series has {n}",
                    a.name,
                    s + prof.len()
                )));
            }
            occupied.extend(busy(s, tr, 0));
            runs.push((ai, s, prof.clone()));
        }
    }
    let days = n.div_ceil(spec.day_length);
    for (ai, a) in spec.appliances.iter().enumerate() {
        let (prof, tr) = &profiles[ai];
        let mut own: Vec<(usize, usize)> = runs
            .iter()
            .filter(|r| r.0 == ai)
            .map(|r| (r.1, r.1 + r.2.len()))
            .collect();
        for d in 0..days {
            let lo = d * spec.day_length + spec.min_spacing + 1;
            let hi = ((d + 1) * spec.day_length).min(n).saturating_sub(prof.len() + spec.min_spacing);
            for _ in 0..a.per_day {
                let placed = (0..10_000).find_map(|_| {
                    if hi <= lo {
                        return None;
                    }
                    let s = rng.random_range(lo..hi);
                    let b = busy(s, tr, spec.min_spacing);
                    let span = [(s.saturating_sub(spec.min_spacing), s + prof.len() + spec.min_spacing)];
                    (!collides(&b, &occupied) && !collides(&span, &own)).then_some((s, b))
                });
                let Some((s, b)) = placed else {
                    return Err(Error::Validation(format!(
                        "cannot place {} runs of `{}` in day {d}",
                        a.per_day, a.name
                    )));
                };
                occupied.extend(b);
                own.push((s, s + prof.len()));
                runs.push((ai, s, prof.clone()));
            }
        }
    }
    runs.sort_by_key(|r| (r.1, r.0));

    for (ai, s, prof) in &runs {
        let a = &spec.appliances[*ai];
        let (_, tr) = &profiles[*ai];
        // Fluctuating loads wander while fully on.
        let on_lo = (a.power.len().max(1) - 1) * a.stagger;
        let on = on_lo..on_lo + a.on_duration;
        let mut wander = 0.0;
        for (k, &v) in prof.iter().enumerate() {
            let mut v = v;
            if a.kind == ApplianceKind::Fluctuating && on.contains(&k) {
                wander = (wander + rng.random_range(-0.5..0.5) * a.amplitude).clamp(-a.amplitude, a.amplitude);
                v += wander;
            }
            p[s + k] += v;
            q[s + k] += a.q_ratio * v;
        }
        for t in tr {
            labels.push(LabelRecord {
                start_epoch: spec.start_epoch + (s + t.at) as i64 - 1,
                end_epoch: spec.start_epoch + (s + t.at + t.len) as i64 - 1,
                appliance: a.name.clone(),
                direction: t.direction,
            });
        }
    }

    let clean = p.clone();
    if spec.noise > 0.0 {
        let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Validation(e.to_string()))?;
        for v in &mut p {
            *v += noise.sample(&mut rng);
        }
        for v in &mut q {
            *v += 0.5 * noise.sample(&mut rng);
        }
    }
    labels.sort_by_key(|l| (l.start_epoch, l.end_epoch));
    let any_q = spec.appliances.iter().any(|a| a.q_ratio != 0.0);
    Ok(SynthOutput {
        series: PowerSeries::new(spec.start_epoch, p, any_q.then_some(q))?,
        labels,
        clean,
    })
}

fn appliance(name: &str, kind: ApplianceKind, power: Vec<f64>, on_duration: usize, per_day: usize) -> ApplianceSpec {
    ApplianceSpec {
        name: name.into(),
        kind,
        power,
        transient: 0,
        on_duration,
        stagger: default_stagger(),
        stair: default_stair(),
        stair_hold: default_stair_hold(),
        amplitude: 0.0,
        q_ratio: 0.0,
        starts: Vec::new(),
        per_day,
    }
}

/// The eight-archetype household used for end-to-end checks.
pub fn reference_corpus(days: usize, seed: u64) -> SynthSpec {
    let ramp = |name: &str, power: f64, transient: usize, on: usize| ApplianceSpec {
        transient,
        q_ratio: 0.3,
        ..appliance(name, ApplianceKind::Ramp, vec![power], on, 6)
    };
    SynthSpec {
        duration: days * 86_400,
        seed,
        noise: 1.0,
        start_epoch: 1_700_006_400,
        base_load: 120.0,
        min_spacing: 200,
        day_length: 86_400,
        appliances: vec![
            ApplianceSpec {
                q_ratio: 0.4,
                ..appliance("fridge", ApplianceKind::Step, vec![150.0], 1200, 12)
            },
            appliance("kettle", ApplianceKind::Step, vec![1800.0], 180, 6),
            ApplianceSpec {
                q_ratio: 0.2,
                ..appliance("microwave", ApplianceKind::Step, vec![500.0, 300.0], 150, 4)
            },
            ramp("ac_short", 240.0, 30, 900),
            ramp("ac_mid", 300.0, 60, 1500),
            ramp("ac_long", 450.0, 300, 2400),
            ApplianceSpec {
                q_ratio: 0.1,
                ..appliance("heater_stairs", ApplianceKind::MultiStep, vec![300.0], 900, 6)
            },
            ApplianceSpec {
                amplitude: 8.0,
                ..appliance("laptop", ApplianceKind::Fluctuating, vec![150.0], 3600, 3)
            },
        ],
    }
}
