use serde::{Deserialize, Serialize};

use crate::signal::PathParams;

/// Per-frame channel estimate: `N_est` paths sorted by descending |gain|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    /// Frame timestamp, seconds.
    pub t: f64,
    pub paths: Vec<PathParams>,
    /// Earliest estimated ToA; every path's `tdoa` is measured from it.
    pub t_min: f64,
    /// Residual energy reached the noise floor before all paths were selected.
    #[serde(default)]
    pub below_noise_floor: bool,
}

impl ChannelEstimate {
    /// Builds an estimate from paths with absolute ToAs, filling in TDoAs and
    /// sorting by gain magnitude.
    pub fn from_paths(t: f64, mut paths: Vec<PathParams>) -> Self {
        let t_min = paths.iter().map(|p| p.toa).fold(f64::INFINITY, f64::min);
        for p in &mut paths {
            p.tdoa = p.toa - t_min;
        }
        paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
        Self {
            t,
            paths,
            t_min,
            below_noise_floor: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn max_tdoa(&self) -> f64 {
        self.paths.iter().map(|p| p.tdoa).fold(0.0, f64::max)
    }
}
