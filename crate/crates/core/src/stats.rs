//! Small statistics helpers shared by the detectors.

use statrs::distribution::{ContinuousCDF, StudentsT};

/// Scale making the MAD a consistent estimator of a Gaussian standard deviation.
pub const MAD_GAUSSIAN_SCALE: f64 = 1.4826;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance, two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Median of `buf`, reordering it in place.
pub fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (_, &mut upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Unscaled median absolute deviation. `scratch` is overwritten.
pub fn mad(xs: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(xs);
    let med = median_in_place(scratch);
    for v in scratch.iter_mut() {
        *v = (*v - med).abs();
    }
    median_in_place(scratch)
}

/// Upper `alpha / 2` critical value of Student's t with `df` degrees of freedom.
pub fn t_critical_two_sided(alpha: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    dist.inverse_cdf(1.0 - alpha / 2.0)
}
