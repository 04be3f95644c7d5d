//! Motif mining over long-transient candidates.

pub mod mdl;
pub mod meanshift;

use serde::Serialize;

use crate::config::DetectionConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Event, EventFeatures};

pub use mdl::{
    dedupe_cluster, enumerate_motif_groups, find_overlap_areas, form_motifs, max_disjoint, resolve_competitions,
    Comparison, MdlModel, Motif, MotifGroup, OverlapArea, Resolution,
};
pub use meanshift::{cluster_events, mean_shift, standardize};

/// Outcome of one mining run. Every index refers to the input slice.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Mining {
    /// Retained candidates, ascending.
    pub kept: Vec<usize>,
    /// Mean-shift clusters before de-duplication.
    pub clusters: Vec<Vec<usize>>,
    pub motifs: Vec<Motif>,
    pub areas: Vec<OverlapArea>,
    pub groups: Vec<MotifGroup>,
    pub resolution: Resolution,
}

impl Mining {
    /// Motif id of each input candidate, if it belongs to one.
    pub fn motif_of(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for m in &self.motifs {
            for &e in &m.members {
                out[e] = Some(m.id);
            }
        }
        out
    }
}

/// Cluster, form motifs and settle every overlap among `events`.
///
/// All candidates must carry features.
pub fn mine_events(events: &[Event], cfg: &DetectionConfig, exec: Execution) -> Result<Mining> {
    if events.is_empty() {
        return Ok(Mining::default());
    }
    let features: Vec<EventFeatures> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            e.features
                .ok_or_else(|| Error::Validation(format!("candidate {i} [{}, {}] has no features", e.start, e.end)))
        })
        .collect::<Result<_>>()?;
    let clusters = cluster_events(&features, cfg.bandwidth, cfg.d_min, exec);

    let deduped: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| {
            let members: Vec<Event> = c.iter().map(|&i| events[i]).collect();
            dedupe_cluster(&members).into_iter().map(|k| c[k]).collect()
        })
        .collect();
    let motifs = form_motifs(&deduped, cfg.n_th);

    let mut pool: Vec<usize> = deduped.concat();
    pool.sort_unstable();
    let pool_events: Vec<Event> = pool.iter().map(|&i| events[i]).collect();
    let (local_areas, local_free) = find_overlap_areas(&pool_events);
    let areas: Vec<OverlapArea> = local_areas
        .into_iter()
        .map(|a| OverlapArea {
            members: a.members.iter().map(|&k| pool[k]).collect(),
            ..a
        })
        .collect();
    let free: Vec<usize> = local_free.iter().map(|&k| pool[k]).collect();

    let model = MdlModel::new(events, &motifs, &areas);
    let groups = enumerate_motif_groups(&model, cfg.max_motifs_per_area, exec)?;
    let resolution = resolve_competitions(&model, &groups, &free);
    Ok(Mining {
        kept: resolution.events.clone(),
        clusters,
        motifs,
        areas,
        groups,
        resolution,
    })
}

/// Description-length terms of one candidate group in one area.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupAudit {
    pub group: usize,
    pub motifs: Vec<usize>,
    pub dl_group: f64,
    pub dl_area_given_group: f64,
    pub mdl: f64,
}

/// Per-area summary for the debug dump.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AreaAudit {
    pub start: usize,
    pub end: usize,
    pub raw_len: usize,
    pub members: Vec<usize>,
    pub groups: Vec<GroupAudit>,
    pub winner: Option<usize>,
}

pub fn audit_areas(m: &Mining, events: &[Event]) -> Vec<AreaAudit> {
    let model = MdlModel::new(events, &m.motifs, &m.areas);
    m.areas
        .iter()
        .enumerate()
        .map(|(o, a)| AreaAudit {
            start: a.start,
            end: a.end,
            raw_len: a.raw_len(),
            members: a.members.clone(),
            groups: m
                .groups
                .iter()
                .filter(|g| g.areas.contains(&o))
                .map(|g| {
                    let dl_group = model.dl_group(&g.motifs);
                    let dl_area = model.dl_areas_given_group(&[o], &g.motifs);
                    GroupAudit {
                        group: g.id,
                        motifs: g.motifs.clone(),
                        dl_group,
                        dl_area_given_group: dl_area,
                        mdl: dl_group + dl_area,
                    }
                })
                .collect(),
            winner: m.resolution.winners.get(o).copied().flatten(),
        })
        .collect()
}
