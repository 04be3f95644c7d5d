//! Overlap-based scoring of detections against ground truth.

use serde::Serialize;

use crate::config::DetectionConfig;
use crate::exec::Execution;
use crate::model::{Event, PowerSeries};

/// Share of total variation that a detection and a reference have in common.
pub fn overlap_coefficient(det: &Event, gt: &Event, s: &PowerSeries) -> f64 {
    let lo = det.start.max(gt.start);
    let hi = det.end.min(gt.end);
    if lo > hi {
        return 0.0;
    }
    let tv_det = s.total_variation(det.start, det.end);
    let tv_gt = s.total_variation(gt.start, gt.end);
    let denom = tv_det.max(tv_gt);
    if denom == 0.0 {
        return if det.start == gt.start && det.end == gt.end { 1.0 } else { 0.0 };
    }
    s.total_variation(lo, hi) / denom
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OvlMatrix {
    pub n_d: usize,
    pub n_t: usize,
    /// Row-major, `n_d × n_t`.
    pub raw: Vec<f64>,
    pub values: Vec<f64>,
}

impl OvlMatrix {
    /// Apply the match threshold and the split penalty to a raw matrix.
    pub fn from_raw(n_d: usize, n_t: usize, raw: Vec<f64>, rho: f64, penalty: f64) -> Self {
        assert_eq!(raw.len(), n_d * n_t);
        let mut row_nnz = vec![0usize; n_d];
        let mut col_nnz = vec![0usize; n_t];
        for i in 0..n_d {
            for j in 0..n_t {
                if raw[i * n_t + j] != 0.0 {
                    row_nnz[i] += 1;
                    col_nnz[j] += 1;
                }
            }
        }
        let mut values = raw.clone();
        for i in 0..n_d {
            for j in 0..n_t {
                let r = raw[i * n_t + j];
                let v = &mut values[i * n_t + j];
                if r > rho {
                    *v = 1.0;
                }
                if r != 0.0 && row_nnz[i] + col_nnz[j] > 2 {
                    *v -= penalty;
                }
                *v = v.max(0.0);
            }
        }
        Self { n_d, n_t, raw, values }
    }

    pub fn raw_at(&self, i: usize, j: usize) -> f64 {
        self.raw[i * self.n_t + j]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_t + j]
    }

    pub fn true_positive(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub fn build_match_matrix(
    dets: &[Event],
    gts: &[Event],
    s: &PowerSeries,
    cfg: &DetectionConfig,
    exec: Execution,
) -> OvlMatrix {
    let n_t = gts.len();
    let rows = exec.map(dets, |d| gts.iter().map(|g| overlap_coefficient(d, g, s)).collect::<Vec<_>>());
    OvlMatrix::from_raw(dets.len(), n_t, rows.concat(), cfg.rho, cfg.penalty)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scores {
    pub tp: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn prf_scores(m: &OvlMatrix) -> Scores {
    if m.n_d == 0 || m.n_t == 0 {
        return Scores {
            tp: 0.0,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
    }
    let tp = m.true_positive();
    let precision = tp / m.n_d as f64;
    let recall = tp / m.n_t as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Scores {
        tp,
        precision,
        recall,
        f1,
    }
}

/// Best-matching reference for one detection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatchRow {
    pub det: usize,
    pub start: usize,
    pub end: usize,
    pub gt: Option<usize>,
    pub raw: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_d: usize,
    pub n_t: usize,
    #[serde(rename = "TP")]
    pub tp: f64,
    #[serde(rename = "Pr")]
    pub precision: f64,
    #[serde(rename = "Re")]
    pub recall: f64,
    #[serde(rename = "F1_mod")]
    pub f1_mod: f64,
    pub matches: Vec<MatchRow>,
}

pub fn evaluate(dets: &[Event], gts: &[Event], s: &PowerSeries, cfg: &DetectionConfig, exec: Execution) -> EvalReport {
    let m = build_match_matrix(dets, gts, s, cfg, exec);
    let sc = prf_scores(&m);
    let matches = dets
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let best = (0..m.n_t)
                .filter(|&j| m.raw_at(i, j) > 0.0)
                .max_by(|&a, &b| m.raw_at(i, a).total_cmp(&m.raw_at(i, b)).then(b.cmp(&a)));
            MatchRow {
                det: i,
                start: d.start,
                end: d.end,
                gt: best,
                raw: best.map_or(0.0, |j| m.raw_at(i, j)),
                score: best.map_or(0.0, |j| m.at(i, j)),
            }
        })
        .collect();
    EvalReport {
        n_d: m.n_d,
        n_t: m.n_t,
        tp: sc.tp,
        precision: sc.precision,
        recall: sc.recall,
        f1_mod: sc.f1,
        matches,
    }
}
