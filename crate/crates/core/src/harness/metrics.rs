//! Path matching and error statistics.

use serde::{Deserialize, Serialize};

use crate::signal::{PathOrder, PathParams};
use crate::{Error, Result};

/// Angle weight (per rad) and delay weight (per ns) of the matching metric.
pub const ANGLE_WEIGHT: f64 = 1.0;
pub const DELAY_WEIGHT_PER_NS: f64 = 1.0 / 7.0;

/// Errors of one matched path: DoD and DoA in degrees, TDoA in ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedError {
    pub dod_deg: f64,
    pub doa_deg: f64,
    pub tdoa_ns: f64,
}

fn errors(e: &PathParams, t: &PathParams) -> MatchedError {
    MatchedError {
        dod_deg: e.dod().angle(&t.dod()).to_degrees(),
        doa_deg: e.doa().angle(&t.doa()).to_degrees(),
        tdoa_ns: (e.tdoa - t.tdoa).abs() * 1e9,
    }
}

pub fn match_distance(e: &PathParams, t: &PathParams) -> f64 {
    let m = errors(e, t);
    ANGLE_WEIGHT * (m.dod_deg + m.doa_deg).to_radians() + DELAY_WEIGHT_PER_NS * m.tdoa_ns
}

/// Matches every LOS / first-order estimate to a distinct true path,
/// greedily by smallest distance (ties: lowest estimate, then truth index).
/// Estimates left without a truth are dropped.
pub fn match_paths(estimated: &[PathParams], truth: &[PathParams]) -> Vec<MatchedError> {
    let est: Vec<usize> = (0..estimated.len())
        .filter(|&i| matches!(estimated[i].order, PathOrder::Los | PathOrder::FirstOrder))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = est
        .iter()
        .flat_map(|&i| (0..truth.len()).map(move |j| (i, j)))
        .map(|(i, j)| (match_distance(&estimated[i], &truth[j]), i, j))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimated.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if used_e[i] || used_t[j] {
            continue;
        }
        used_e[i] = true;
        used_t[j] = true;
        out.push((i, errors(&estimated[i], &truth[j])));
    }
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, m)| m).collect()
}

/// Nearest-rank percentile: the ⌈p/100 · n⌉-th smallest value (the minimum
/// for p = 0).
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Ok(v[rank.clamp(1, v.len()) - 1])
}

/// Empirical CDF points `(value, fraction ≤ value)`.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, x)| (*x, (i + 1) as f64 / n)).collect()
}
