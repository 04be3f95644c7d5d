//! Random motif/area instances and an exhaustive check of the tournament.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mtevent_core::motif::mdl::{enumerate_motif_groups, find_overlap_areas, resolve_competitions, MdlModel, Motif};
use mtevent_core::{Event, Execution, Stage};

use crate::oracles::{mdl_score, overlap_areas, rel_close, spans_overlap};

pub struct Instance {
    pub spans: Vec<(usize, usize)>,
    /// Member event indices per motif id.
    pub motifs: Vec<Vec<usize>>,
}

impl Instance {
    pub fn events(&self) -> Vec<Event> {
        self.spans
            .iter()
            .map(|&(a, b)| Event::new(a, b, 10, Stage::LongTransient))
            .collect()
    }

    pub fn motif_list(&self) -> Vec<Motif> {
        self.motifs
            .iter()
            .enumerate()
            .map(|(id, m)| Motif { id, members: m.clone() })
            .collect()
    }
}

/// Up to `max_areas` areas, each framed by one unlabelled event so that it
/// stays a single area, and up to `max_motifs` motifs with members inside
/// the areas plus one to three members elsewhere.
pub fn random_instance(rng: &mut ChaCha8Rng, max_motifs: usize, max_areas: usize) -> Instance {
    let n_areas = rng.random_range(1..=max_areas);
    let n_motifs = rng.random_range(1..=max_motifs);
    let mut spans = Vec::new();
    let mut motifs = vec![Vec::new(); n_motifs];
    for o in 0..n_areas {
        let base = 10_000 * (o + 1);
        let len = rng.random_range(40..160usize);
        spans.push((base, base + len - 1));
        for members in motifs.iter_mut() {
            if !rng.random_bool(0.6) {
                continue;
            }
            // One member, or two disjoint ones in the two halves.
            let halves: Vec<(usize, usize)> = if rng.random_bool(0.2) {
                vec![(0, len / 2 - 1), (len / 2, len - 1)]
            } else {
                vec![(0, len - 1)]
            };
            for (lo, hi) in halves {
                let a = rng.random_range(lo..=hi);
                let b = rng.random_range(a..=hi);
                members.push(spans.len());
                spans.push((base + a, base + b));
            }
        }
    }
    for (m, members) in motifs.iter_mut().enumerate() {
        for j in 0..rng.random_range(1..=3usize) {
            let a = 200_000 + m * 10_000 + j * 1000;
            members.push(spans.len());
            spans.push((a, a + rng.random_range(4..200usize)));
        }
    }
    Instance { spans, motifs }
}

/// The three-area, four-motif case where one motif explains each whole
/// transient and three others explain fragments of it.
pub fn fragments_instance() -> Instance {
    let pieces = [(0, 24), (10, 40), (30, 59), (0, 59)];
    let mut spans = Vec::new();
    let mut motifs = vec![Vec::new(); 4];
    for a in [1000usize, 3000, 5000, 7000] {
        for (m, &(lo, hi)) in pieces.iter().enumerate() {
            let base = if a == 7000 { a + 200 * m } else { a };
            motifs[m].push(spans.len());
            spans.push((base + lo, base + hi));
        }
    }
    Instance { spans, motifs }
}

pub struct Outcome {
    pub comparisons: usize,
    /// Winning motif set per area.
    pub winners: Vec<Option<Vec<usize>>>,
}

/// Compare the library against exhaustive enumeration on one instance.
pub fn check(inst: &Instance) -> Result<Outcome, String> {
    let events = inst.events();
    let motifs = inst.motif_list();
    let (areas, free) = find_overlap_areas(&events);

    let oracle_areas = overlap_areas(&inst.spans);
    let got: Vec<_> = areas.iter().map(|a| (a.start, a.end, a.members.clone())).collect();
    if got != oracle_areas {
        return Err(format!("areas differ: {got:?} vs {oracle_areas:?}"));
    }
    let in_area: BTreeSet<usize> = oracle_areas.iter().flat_map(|a| a.2.iter().copied()).collect();
    let oracle_free: Vec<usize> = (0..inst.spans.len()).filter(|i| !in_area.contains(i)).collect();
    if free != oracle_free {
        return Err(format!("free events differ: {free:?} vs {oracle_free:?}"));
    }

    // Every maximal collision-free subset of the motifs present in an area.
    let members_in = |m: usize, o: usize| -> Vec<usize> {
        inst.motifs[m].iter().copied().filter(|e| oracle_areas[o].2.contains(e)).collect()
    };
    let admissible = |set: &[usize], o: usize| -> bool {
        let sets: Vec<Vec<usize>> = set.iter().map(|&m| members_in(m, o)).collect();
        if sets.iter().any(|s| s.is_empty()) {
            return false;
        }
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                for &x in &sets[i] {
                    for &y in &sets[j] {
                        if spans_overlap(inst.spans[x], inst.spans[y]) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    };
    let k = inst.motifs.len();
    let mut oracle_groups: BTreeSet<Vec<usize>> = BTreeSet::new();
    for o in 0..oracle_areas.len() {
        for mask in 1u32..(1 << k) {
            let set: Vec<usize> = (0..k).filter(|&m| mask & (1 << m) != 0).collect();
            if !admissible(&set, o) {
                continue;
            }
            let maximal = (0..k).filter(|m| !set.contains(m)).all(|m| {
                let mut bigger = set.clone();
                bigger.push(m);
                bigger.sort_unstable();
                !admissible(&bigger, o)
            });
            if maximal {
                oracle_groups.insert(set);
            }
        }
    }
    let oracle_groups: Vec<(Vec<usize>, Vec<usize>)> = oracle_groups
        .into_iter()
        .map(|g| {
            let held = (0..oracle_areas.len()).filter(|&o| admissible(&g, o)).collect();
            (g, held)
        })
        .collect();

    let model = MdlModel::new(&events, &motifs, &areas);
    let groups = enumerate_motif_groups(&model, 20, Execution::Sequential).map_err(|e| e.to_string())?;
    let got: Vec<_> = groups.iter().map(|g| (g.motifs.clone(), g.areas.clone())).collect();
    if got != oracle_groups {
        return Err(format!("groups differ: {got:?} vs {oracle_groups:?}"));
    }

    let res = resolve_competitions(&model, &groups, &free);
    let score = |areas: &[usize], g: usize| mdl_score(&inst.spans, &inst.motifs, &oracle_areas, areas, &groups[g].motifs);
    for c in &res.trace {
        let (w, l) = (score(&c.areas, c.winner), score(&c.areas, c.loser));
        if !rel_close(w, c.winner_score, 1e-9) || !rel_close(l, c.loser_score, 1e-9) {
            return Err(format!("scores differ on {c:?}: oracle {w} / {l}"));
        }
        if w > l {
            return Err(format!("group {} won with the larger score: {c:?}", c.winner));
        }
        for o in &c.areas {
            if !groups[c.winner].areas.contains(o) || !groups[c.loser].areas.contains(o) {
                return Err(format!("comparison over area {o} that a group cannot hold: {c:?}"));
            }
        }
    }

    // Every group that could stand in an area either holds it at the end or
    // lost it in a comparison; the holder never lost it.
    let mut winners = Vec::new();
    for o in 0..areas.len() {
        let contenders: Vec<usize> = (0..groups.len()).filter(|&g| groups[g].areas.contains(&o)).collect();
        let lost = |g: usize| res.trace.iter().any(|c| c.loser == g && c.areas.contains(&o));
        match (res.winners[o], contenders.is_empty()) {
            (None, true) => winners.push(None),
            (Some(g), false) if contenders.contains(&g) && !lost(g) => {
                if let Some(&x) = contenders.iter().find(|&&x| x != g && !lost(x)) {
                    return Err(format!("area {o}: group {x} neither holds nor lost it"));
                }
                winners.push(Some(groups[g].motifs.clone()));
            }
            (w, _) => return Err(format!("area {o}: bad winner {w:?} among {contenders:?}")),
        }
    }

    let kept: BTreeSet<usize> = res.events.iter().copied().collect();
    for &f in &free {
        if !kept.contains(&f) {
            return Err(format!("free event {f} dropped"));
        }
    }
    for (o, area) in oracle_areas.iter().enumerate() {
        let inside: Vec<usize> = area.2.iter().copied().filter(|e| kept.contains(e)).collect();
        for (i, &x) in inside.iter().enumerate() {
            for &y in &inside[i + 1..] {
                if spans_overlap(inst.spans[x], inst.spans[y]) {
                    return Err(format!("area {o}: kept events {x} and {y} overlap"));
                }
            }
        }
        if let Some(g) = res.winners[o] {
            for &m in &groups[g].motifs {
                if members_in(m, o).iter().any(|e| !kept.contains(e)) {
                    return Err(format!("area {o}: winner's motif {m} lost events"));
                }
            }
        }
    }
    Ok(Outcome {
        comparisons: res.trace.len(),
        winners,
    })
}
