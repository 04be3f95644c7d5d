//! Flat-kernel mean-shift over event feature vectors.

use crate::exec::Execution;
use crate::model::EventFeatures;

const MAX_ITER: usize = 300;

/// Per-dimension z-scores. The spread is floored at `min_scale` so that
/// differences below it never dominate; with `min_scale = 0` a dimension
/// with zero spread maps to 0.
pub fn standardize(features: &[EventFeatures], min_scale: f64) -> Vec<[f64; 3]> {
    let n = features.len() as f64;
    let rows: Vec<[f64; 3]> = features.iter().map(EventFeatures::as_array).collect();
    let mut mu = [0.0; 3];
    let mut sd = [0.0; 3];
    for d in 0..3 {
        mu[d] = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        sd[d] = (rows.iter().map(|r| (r[d] - mu[d]).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(min_scale);
    }
    rows.iter()
        .map(|r| {
            let mut z = [0.0; 3];
            for d in 0..3 {
                z[d] = if sd[d] > 0.0 { (r[d] - mu[d]) / sd[d] } else { 0.0 };
            }
            z
        })
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|d| (a[d] - b[d]).powi(2)).sum()
}

/// Climb from `seed` to the mode of the flat kernel of radius `h`.
fn climb(points: &[[f64; 3]], seed: [f64; 3], h: f64) -> [f64; 3] {
    let h2 = h * h;
    let tol2 = (1e-7 * h).powi(2);
    let mut x = seed;
    for _ in 0..MAX_ITER {
        let mut sum = [0.0; 3];
        let mut count = 0usize;
        for p in points.iter().filter(|p| dist2(p, &x) <= h2) {
            for d in 0..3 {
                sum[d] += p[d];
            }
            count += 1;
        }
        // The centroid of a ball's contents always has a point within h.
        debug_assert!(count > 0);
        let next = sum.map(|v| v / count as f64);
        let moved = dist2(&next, &x);
        x = next;
        if moved <= tol2 {
            break;
        }
    }
    x
}

/// Mean-shift clustering of standardized `points` with bandwidth `h`.
///
/// Every point seeds a climb; converged modes are merged greedily (most
/// supported first) when closer than `h`, and each point joins its nearest
/// surviving mode. Clusters are ordered by their smallest member.
pub fn mean_shift(points: &[[f64; 3]], h: f64, exec: Execution) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let modes: Vec<[f64; 3]> = exec.map(points, |&p| climb(points, p, h));
    let h2 = h * h;
    let support: Vec<usize> = exec.map(&modes, |m| points.iter().filter(|p| dist2(p, m) <= h2).count());
    let mut order: Vec<usize> = (0..modes.len()).collect();
    order.sort_by(|&a, &b| support[b].cmp(&support[a]).then(a.cmp(&b)));
    let mut centers: Vec<[f64; 3]> = Vec::new();
    for i in order {
        if centers.iter().all(|c| dist2(c, &modes[i]) > h2) {
            centers.push(modes[i]);
        }
    }
    let mut clusters = vec![Vec::new(); centers.len()];
    for (i, p) in points.iter().enumerate() {
        let best = (0..centers.len())
            .min_by(|&a, &b| dist2(p, &centers[a]).total_cmp(&dist2(p, &centers[b])))
            .expect("at least one center");
        clusters[best].push(i);
    }
    clusters.retain(|c| !c.is_empty());
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Standardize the feature triples and cluster them.
pub fn cluster_events(
    features: &[EventFeatures],
    bandwidth: f64,
    min_scale: f64,
    exec: Execution,
) -> Vec<Vec<usize>> {
    mean_shift(&standardize(features, min_scale), bandwidth, exec)
}
