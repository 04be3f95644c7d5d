//! Detection parameters. Field names double as the keys of the flat TOML
//! config file read by the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Sliding-window lengths (samples) for long-transient detection.
    pub window_set: Vec<usize>,
    /// Slope thresholds (W/s) of the steady-segment rule.
    pub k_th1: f64,
    pub k_th2: f64,
    /// Power-difference thresholds (W) of the steady-segment rule.
    pub dp_th1: f64,
    pub dp_th2: f64,
    /// Longest tolerated steady stretch inside an event (s).
    pub dt_steady: f64,
    /// Days in the motif-mining buffer.
    pub n_days: usize,
    /// A cluster becomes a motif when it has more than this many members.
    pub n_th: usize,
    /// VAD window length over the steady-state difference series.
    pub vad_window: usize,
    /// Energy threshold of a fluctuation window (W^2).
    pub lambda1: f64,
    /// Range threshold of a fluctuation window (W).
    pub lambda2: f64,
    /// Half-width of the neighbourhood used for the fluctuation statistics.
    pub w_post: usize,
    pub eta: f64,
    /// Two-sided significance level of the moving t-test.
    pub t_test_alpha: f64,
    /// Overlap coefficient above which a detection counts as a full match.
    pub rho: f64,
    /// Deduction for detections overlapping several references (and vice versa).
    pub penalty: f64,

    /// Trailing window (samples) for the adaptive threshold noise estimate.
    pub threshold_window: usize,
    /// Multiplier on the scaled MAD of |ΔP|.
    pub mad_scale: f64,
    /// Floor of the adaptive threshold (W).
    pub d_min: f64,
    /// Stop criterion (W) of the top-down piecewise linear split.
    pub plr_tolerance: f64,
    /// Mean-shift bandwidth in standardized feature units.
    pub bandwidth: f64,
    /// Boundary search gives up after `clamp_factor * w` samples.
    pub clamp_factor: usize,
    /// Length of a "day" for the multi-day buffer (samples).
    pub day_length: usize,
    /// Epoch offset (s) added before splitting into days; 0 means UTC days.
    pub day_offset: i64,
    /// Largest number of motifs allowed to meet in one overlap area.
    pub max_motifs_per_area: usize,
    /// Run the fluctuation-based post-processing.
    pub postprocess: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            window_set: vec![5, 10, 15, 20, 25, 30, 60],
            k_th1: 0.5,
            k_th2: 1.0,
            dp_th1: 10.0,
            dp_th2: 40.0,
            dt_steady: 10.0,
            n_days: 4,
            n_th: 3,
            vad_window: 10,
            lambda1: 50.0,
            lambda2: 5.0,
            w_post: 300,
            eta: 3.0,
            t_test_alpha: 0.05,
            rho: 0.8,
            penalty: 0.1,
            threshold_window: 300,
            mad_scale: 5.0,
            d_min: 15.0,
            plr_tolerance: 5.0,
            bandwidth: 0.8,
            clamp_factor: 4,
            day_length: 86_400,
            day_offset: 0,
            max_motifs_per_area: 20,
            postprocess: true,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.window_set.is_empty() {
            return bad("window_set is empty");
        }
        if self.window_set.windows(2).any(|w| w[0] >= w[1]) {
            return bad("window_set must be strictly ascending");
        }
        if self.window_set[0] < 2 {
            return bad("window lengths must be at least 2");
        }
        if !(self.k_th1 > 0.0 && self.k_th1 < self.k_th2) {
            return bad("need 0 < k_th1 < k_th2");
        }
        if !(self.dp_th1 > 0.0 && self.dp_th1 < self.dp_th2) {
            return bad("need 0 < dp_th1 < dp_th2");
        }
        let positive = [
            ("dt_steady", self.dt_steady),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("eta", self.eta),
            ("mad_scale", self.mad_scale),
            ("d_min", self.d_min),
            ("plr_tolerance", self.plr_tolerance),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.t_test_alpha > 0.0 && self.t_test_alpha < 1.0) {
            return bad("t_test_alpha must lie in (0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.penalty) {
            return bad("penalty must lie in [0, 1)");
        }
        if self.n_days == 0 || self.vad_window == 0 || self.threshold_window < 2 {
            return bad("n_days, vad_window must be positive and threshold_window >= 2");
        }
        if self.clamp_factor == 0 || self.day_length == 0 {
            return bad("clamp_factor and day_length must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}
