//! Competition between overlapping candidates, settled by description length.
//!
//! Overlapping candidates form *areas*; recurring clusters form *motifs*; a
//! *group* is a set of motifs that can explain an area together without
//! their events colliding. Groups are compared pairwise on the areas they
//! share and the one with the shorter total description keeps them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{events_overlap, Event};

/// A cluster of recurring events, identified by indices into the pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Motif {
    pub id: usize,
    pub members: Vec<usize>,
}

impl Motif {
    pub fn n_motif(&self) -> usize {
        self.members.len()
    }
}

/// Union span of a connected set of overlapping events.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OverlapArea {
    pub start: usize,
    pub end: usize,
    /// Pool indices, ascending.
    pub members: Vec<usize>,
}

impl OverlapArea {
    /// Raw description length: the number of samples in the area.
    pub fn raw_len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, event: usize) -> bool {
        self.members.binary_search(&event).is_ok()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MotifGroup {
    pub id: usize,
    /// Motif ids, ascending.
    pub motifs: Vec<usize>,
    /// Areas in which the group can stand, ascending.
    pub areas: Vec<usize>,
}

impl MotifGroup {
    pub fn occurrences(&self) -> usize {
        self.areas.len()
    }
}

/// Keep one event per connected set of overlapping events: the shortest,
/// then the smallest window, then the earliest. Returns kept positions.
pub fn dedupe_cluster(cluster: &[Event]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cluster.len()).collect();
    order.sort_by_key(|&i| (cluster[i].start, cluster[i].end, i));
    let mut kept = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut reach = cluster[order[i]].end;
        let mut j = i + 1;
        while j < order.len() && cluster[order[j]].start <= reach {
            reach = reach.max(cluster[order[j]].end);
            j += 1;
        }
        let best = order[i..j]
            .iter()
            .copied()
            .min_by_key(|&k| (cluster[k].span(), cluster[k].window_len, cluster[k].start, k))
            .expect("component is non-empty");
        kept.push(best);
        i = j;
    }
    kept.sort_unstable();
    kept
}

/// Clusters with more than `n_th` members become motifs, numbered in order.
pub fn form_motifs(clusters: &[Vec<usize>], n_th: usize) -> Vec<Motif> {
    clusters
        .iter()
        .filter(|c| c.len() > n_th)
        .enumerate()
        .map(|(id, c)| {
            let mut members = c.clone();
            members.sort_unstable();
            Motif { id, members }
        })
        .collect()
}

/// Connected components of the overlap graph. Components of two or more
/// events become areas; the rest are returned as free events.
pub fn find_overlap_areas(events: &[Event]) -> (Vec<OverlapArea>, Vec<usize>) {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].start, events[i].end, i));
    let mut areas = Vec::new();
    let mut free = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let start = events[order[i]].start;
        let mut end = events[order[i]].end;
        let mut j = i + 1;
        while j < order.len() && events[order[j]].start <= end {
            end = end.max(events[order[j]].end);
            j += 1;
        }
        if j - i == 1 {
            free.push(order[i]);
        } else {
            let mut members = order[i..j].to_vec();
            members.sort_unstable();
            areas.push(OverlapArea {
                start,
                end,
                members,
            });
        }
        i = j;
    }
    free.sort_unstable();
    (areas, free)
}

/// Events, motifs and areas of one mining run, with the description-length
/// terms defined over them.
#[derive(Clone, Debug)]
pub struct MdlModel<'a> {
    pub events: &'a [Event],
    pub motifs: &'a [Motif],
    pub areas: &'a [OverlapArea],
    motif_of: Vec<Option<usize>>,
}

impl<'a> MdlModel<'a> {
    pub fn new(events: &'a [Event], motifs: &'a [Motif], areas: &'a [OverlapArea]) -> Self {
        let mut motif_of = vec![None; events.len()];
        for m in motifs {
            for &e in &m.members {
                motif_of[e] = Some(m.id);
            }
        }
        Self {
            events,
            motifs,
            areas,
            motif_of,
        }
    }

    fn motif(&self, id: usize) -> &Motif {
        &self.motifs[id]
    }

    /// Mean event length (samples) of one motif.
    pub fn dl_motif(&self, id: usize) -> f64 {
        let m = self.motif(id);
        let total: usize = m.members.iter().map(|&e| self.events[e].n_samples()).sum();
        total as f64 / m.n_motif() as f64
    }

    /// Model cost: the sum of the member motifs' mean event lengths.
    pub fn dl_group(&self, motifs: &[usize]) -> f64 {
        motifs.iter().map(|&m| self.dl_motif(m)).sum()
    }

    /// Events of `motifs` that sit in area `area`.
    pub fn group_events_in(&self, motifs: &[usize], area: usize) -> Vec<usize> {
        let a = &self.areas[area];
        let mut out: Vec<usize> = motifs
            .iter()
            .flat_map(|&m| self.motif(m).members.iter().copied())
            .filter(|&e| a.contains(e))
            .collect();
        out.sort_unstable();
        out
    }

    /// Data cost of `areas` once the group's events are replaced by motif
    /// symbols: raw samples left over, plus one symbol per motif per area.
    pub fn dl_areas_given_group(&self, areas: &[usize], motifs: &[usize]) -> f64 {
        let residual: usize = areas
            .iter()
            .map(|&o| {
                let covered: usize = self
                    .group_events_in(motifs, o)
                    .iter()
                    .map(|&e| self.events[e].n_samples())
                    .sum();
                let raw = self.areas[o].raw_len();
                assert!(covered <= raw, "group events exceed area {o}");
                raw - covered
            })
            .sum();
        residual as f64 + (areas.len() * motifs.len()) as f64
    }

    pub fn mdl_score(&self, areas: &[usize], motifs: &[usize]) -> f64 {
        self.dl_areas_given_group(areas, motifs) + self.dl_group(motifs)
    }

    /// Motifs with at least one member in `area`, each with those members.
    fn present_in(&self, area: usize) -> BTreeMap<usize, Vec<usize>> {
        let mut present: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &e in &self.areas[area].members {
            if let Some(m) = self.motif_of[e] {
                present.entry(m).or_default().push(e);
            }
        }
        present
    }

    fn collide(&self, a: &[usize], b: &[usize]) -> bool {
        a.iter()
            .any(|&x| b.iter().any(|&y| events_overlap(&self.events[x], &self.events[y])))
    }

    /// Can `motifs` jointly explain `area`? All must be present there and
    /// pairwise collision-free.
    pub fn admissible(&self, area: usize, motifs: &[usize]) -> bool {
        let present = self.present_in(area);
        let Some(sets) = motifs.iter().map(|m| present.get(m)).collect::<Option<Vec<_>>>() else {
            return false;
        };
        (0..sets.len()).all(|i| (i + 1..sets.len()).all(|j| !self.collide(sets[i], sets[j])))
    }

    /// Maximal collision-free motif sets of one area.
    fn maximal_sets(&self, area: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
        let present = self.present_in(area);
        if present.len() > cap {
            return Err(Error::Capacity(format!(
                "{} motifs meet in overlap area [{}, {}]; at most {cap} supported",
                present.len(),
                self.areas[area].start,
                self.areas[area].end
            )));
        }
        let ids: Vec<usize> = present.keys().copied().collect();
        let sets: Vec<&Vec<usize>> = present.values().collect();
        let k = ids.len();
        // compat[i] has bit j set when motifs i and j never collide here.
        let mut compat = vec![0u32; k];
        for i in 0..k {
            for j in 0..k {
                if i != j && !self.collide(sets[i], sets[j]) {
                    compat[i] |= 1 << j;
                }
            }
        }
        let mut cliques = Vec::new();
        let all = if k == 0 { 0 } else { u32::MAX >> (32 - k) };
        bron_kerbosch(0, all, 0, &compat, &mut cliques);
        let mut out: Vec<Vec<usize>> = cliques
            .into_iter()
            .filter(|&c| c != 0)
            .map(|c| (0..k).filter(|&i| c & (1 << i) != 0).map(|i| ids[i]).collect())
            .collect();
        out.sort();
        Ok(out)
    }
}

/// Maximal cliques of the compatibility graph, with pivoting.
fn bron_kerbosch(r: u32, mut p: u32, mut x: u32, adj: &[u32], out: &mut Vec<u32>) {
    if p == 0 && x == 0 {
        out.push(r);
        return;
    }
    let pivot = (p | x).trailing_zeros() as usize;
    let mut candidates = p & !adj[pivot];
    while candidates != 0 {
        let v = candidates.trailing_zeros() as usize;
        let bit = 1u32 << v;
        bron_kerbosch(r | bit, p & adj[v], x & adj[v], adj, out);
        p &= !bit;
        x |= bit;
        candidates &= !bit;
    }
}

/// Every maximal collision-free motif set of every area, deduplicated, with
/// the areas each set can stand in.
pub fn enumerate_motif_groups(
    model: &MdlModel<'_>,
    cap: usize,
    exec: Execution,
) -> Result<Vec<MotifGroup>> {
    let cap = cap.min(31);
    let area_ids: Vec<usize> = (0..model.areas.len()).collect();
    let per_area = exec.map(&area_ids, |&o| model.maximal_sets(o, cap));
    let mut distinct = BTreeSet::new();
    for sets in per_area {
        distinct.extend(sets?);
    }
    let groups = distinct.into_iter().collect::<Vec<_>>();
    let areas_of = exec.map(&groups, |motifs| {
        area_ids
            .iter()
            .copied()
            .filter(|&o| model.admissible(o, motifs))
            .collect::<Vec<_>>()
    });
    Ok(groups
        .into_iter()
        .zip(areas_of)
        .enumerate()
        .map(|(id, (motifs, areas))| MotifGroup { id, motifs, areas })
        .collect())
}

/// One pairwise decision of the tournament.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub winner: usize,
    pub loser: usize,
    /// Areas both groups still held.
    pub areas: Vec<usize>,
    pub winner_score: f64,
    pub loser_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Resolution {
    /// Retained pool indices, ascending.
    pub events: Vec<usize>,
    /// Surviving group per area, if any motif was present.
    pub winners: Vec<Option<usize>>,
    pub trace: Vec<Comparison>,
}

/// Largest set of mutually non-overlapping events (earliest end first).
pub fn max_disjoint(events: &[Event], candidates: &[usize]) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by_key(|&i| (events[i].end, events[i].start, i));
    let mut out: Vec<usize> = Vec::new();
    for i in order {
        if out.last().is_none_or(|&j| events[j].end < events[i].start) {
            out.push(i);
        }
    }
    out
}

fn member_count(model: &MdlModel<'_>, g: &MotifGroup) -> usize {
    g.motifs.iter().map(|&m| model.motifs[m].n_motif()).sum()
}

/// Pairwise tournament between groups, strongest (most occurrences) first.
///
/// The top group meets the next group it shares areas with; on the shared
/// areas the group with the larger MDL score drops out. Ties go to the
/// group with more member events, then more motifs, then the lower id.
/// Repeats until no two groups share an area.
pub fn resolve_competitions(
    model: &MdlModel<'_>,
    groups: &[MotifGroup],
    free_events: &[usize],
) -> Resolution {
    let mut held: Vec<BTreeSet<usize>> = groups.iter().map(|g| g.areas.iter().copied().collect()).collect();
    let mut trace = Vec::new();
    loop {
        let mut order: Vec<usize> = (0..groups.len()).filter(|&g| !held[g].is_empty()).collect();
        order.sort_by(|&a, &b| held[b].len().cmp(&held[a].len()).then(a.cmp(&b)));
        let pair = order.iter().enumerate().find_map(|(i, &g1)| {
            order[i + 1..]
                .iter()
                .find(|&&g2| !held[g1].is_disjoint(&held[g2]))
                .map(|&g2| (g1, g2))
        });
        let Some((g1, g2)) = pair else { break };
        let shared: Vec<usize> = held[g1].intersection(&held[g2]).copied().collect();
        let s1 = model.mdl_score(&shared, &groups[g1].motifs);
        let s2 = model.mdl_score(&shared, &groups[g2].motifs);
        let key = |g: usize| {
            (
                member_count(model, &groups[g]),
                groups[g].motifs.len(),
                std::cmp::Reverse(g),
            )
        };
        let g1_wins = match s1.total_cmp(&s2) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => key(g1) > key(g2),
        };
        let (winner, loser, ws, ls) = if g1_wins { (g1, g2, s1, s2) } else { (g2, g1, s2, s1) };
        for o in &shared {
            held[loser].remove(o);
        }
        trace.push(Comparison {
            winner,
            loser,
            areas: shared,
            winner_score: ws,
            loser_score: ls,
        });
    }

    let mut winners = vec![None; model.areas.len()];
    for (g, areas) in held.iter().enumerate() {
        for &o in areas {
            debug_assert!(winners[o].is_none());
            winners[o] = Some(g);
        }
    }

    let mut events: Vec<usize> = free_events.to_vec();
    for (o, area) in model.areas.iter().enumerate() {
        match winners[o] {
            Some(g) => {
                let chosen = model.group_events_in(&groups[g].motifs, o);
                let rest: Vec<usize> = area
                    .members
                    .iter()
                    .copied()
                    .filter(|e| !chosen.contains(e))
                    .filter(|&e| {
                        !chosen
                            .iter()
                            .any(|&c| events_overlap(&model.events[c], &model.events[e]))
                    })
                    .collect();
                events.extend(chosen);
                events.extend(max_disjoint(model.events, &rest));
            }
            None => events.extend(max_disjoint(model.events, &area.members)),
        }
    }
    events.sort_unstable();
    events.dedup();
    Resolution {
        events,
        winners,
        trace,
    }
}
