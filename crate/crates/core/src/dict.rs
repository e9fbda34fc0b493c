//! Sparsifying dictionaries for the five channel dimensions.
//!
//! Dimensions are ordered Tx-x, Tx-y, Rx-x, Rx-y, delay. The four angular
//! dimensions are gridded over cone angles `ψ = acos(u)` of the direction
//! cosine `u` along one array axis, so that each atom is exactly one
//! Kronecker factor of the array response. Tx columns are conjugated.
//! Delay grids hold window-relative delays; the window origin is kept in
//! [`DictionarySet::delay_origin`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::estimate::ChannelEstimate;
use crate::signal::{angles_from_cones, axis_factor, cone_angles, delay_response, ArrayGeometry, WaveformConfig};
use crate::{Error, Result};

/// Default cap on atoms per dimension.
pub const MAX_ATOMS_PER_DIM: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    TxX,
    TxY,
    RxX,
    RxY,
    Delay,
}

pub const GRID_KINDS: [GridKind; 5] = [
    GridKind::TxX,
    GridKind::TxY,
    GridKind::RxX,
    GridKind::RxY,
    GridKind::Delay,
];

/// Ordered parameter values of one dictionary dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub values: Vec<f64>,
    pub kind: GridKind,
}

impl Grid1D {
    pub fn new(values: Vec<f64>, kind: GridKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config(format!("{kind:?} grid is empty")));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("{kind:?} grid is not strictly increasing")));
        }
        Ok(Self { values, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the grid value closest to `v`; lowest index on ties.
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        for (i, x) in self.values.iter().enumerate() {
            if (x - v).abs() < (self.values[best] - v).abs() {
                best = i;
            }
        }
        best
    }
}

/// Column for one grid value of dimension `kind`.
pub fn atom_column(
    kind: GridKind,
    value: f64,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    cfg: &WaveformConfig,
) -> Vec<Complex64> {
    match kind {
        GridKind::TxX => conj(axis_factor(tx.nx, tx.spacing, value.cos())),
        GridKind::TxY => conj(axis_factor(tx.ny, tx.spacing, value.cos())),
        GridKind::RxX => axis_factor(rx.nx, rx.spacing, value.cos()),
        GridKind::RxY => axis_factor(rx.ny, rx.spacing, value.cos()),
        GridKind::Delay => delay_response(value, cfg)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect(),
    }
}

fn conj(v: Vec<Complex64>) -> Vec<Complex64> {
    v.into_iter().map(|z| z.conj()).collect()
}

fn matrix_for(
    grid: &Grid1D,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    cfg: &WaveformConfig,
) -> DMatrix<Complex64> {
    let cols: Vec<Vec<Complex64>> = grid
        .values
        .iter()
        .map(|&v| atom_column(grid.kind, v, tx, rx, cfg))
        .collect();
    let rows = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r])
}

/// The five per-dimension dictionaries `Ψ_1 … Ψ_5` and their grids.
#[derive(Debug, Clone)]
pub struct DictionarySet {
    pub psi: [DMatrix<Complex64>; 5],
    pub grids: [Grid1D; 5],
    /// Response lengths `[N_t^x, N_t^y, N_r^x, N_r^y, N_d]`.
    pub dims: [usize; 5],
    /// Absolute time of delay-grid value zero.
    pub delay_origin: f64,
}

/// Decoded physical parameters of one atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomParams {
    pub dod_az: f64,
    pub dod_el: f64,
    pub doa_az: f64,
    pub doa_el: f64,
    /// Absolute ToA, seconds.
    pub toa: f64,
}

impl DictionarySet {
    pub fn from_grids(
        grids: [Grid1D; 5],
        tx: &ArrayGeometry,
        rx: &ArrayGeometry,
        cfg: &WaveformConfig,
    ) -> Self {
        let psi = std::array::from_fn(|k| matrix_for(&grids[k], tx, rx, cfg));
        Self {
            psi,
            grids,
            dims: [tx.nx, tx.ny, rx.nx, rx.ny, cfg.nd],
            delay_origin: cfg.t_off,
        }
    }

    pub fn sizes(&self) -> [usize; 5] {
        std::array::from_fn(|k| self.grids[k].len())
    }

    /// Size of the joint atom set, `∏ N_k^a`.
    pub fn atom_count(&self) -> f64 {
        self.sizes().iter().map(|&n| n as f64).product()
    }

    pub fn check_index(&self, j: [usize; 5]) -> Result<()> {
        let sizes = self.sizes();
        if j.iter().zip(&sizes).any(|(a, n)| a >= n) {
            return Err(Error::IndexOutOfRange { index: j, sizes });
        }
        Ok(())
    }

    pub fn decode(&self, j: [usize; 5]) -> AtomParams {
        let v = |k: usize| self.grids[k].values[j[k]];
        let (dod_az, dod_el) = angles_from_cones(v(0), v(1));
        let (doa_az, doa_el) = angles_from_cones(v(2), v(3));
        AtomParams {
            dod_az,
            dod_el,
            doa_az,
            doa_el,
            toa: self.delay_origin + v(4),
        }
    }

    /// Grid indices nearest to a path's parameters.
    pub fn nearest_atom(&self, p: &crate::signal::PathParams) -> [usize; 5] {
        let (tx_x, tx_y) = cone_angles(p.dod_az, p.dod_el);
        let (rx_x, rx_y) = cone_angles(p.doa_az, p.doa_el);
        let targets = [tx_x, tx_y, rx_x, rx_y, p.toa - self.delay_origin];
        std::array::from_fn(|k| self.grids[k].nearest(targets[k]))
    }

    /// Grid values per dimension as JSON, for debugging dumps.
    pub fn grids_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tx_x": self.grids[0].values,
            "tx_y": self.grids[1].values,
            "rx_x": self.grids[2].values,
            "rx_y": self.grids[3].values,
            "delay": self.grids[4].values,
            "delay_origin": self.delay_origin,
        })
    }
}

/// Full-range dictionaries for initial access.
///
/// Angular grids are `{k π / N_k^a}` for `k < N_k^a` (half-open `[0, π)`);
/// the delay grid is `{k N_d T_s / N_5^a}`.
pub fn build_full(
    cfg: &WaveformConfig,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    atoms: [usize; 5],
) -> Result<DictionarySet> {
    build_full_capped(cfg, tx, rx, atoms, MAX_ATOMS_PER_DIM)
}

pub fn build_full_capped(
    cfg: &WaveformConfig,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    atoms: [usize; 5],
    cap: usize,
) -> Result<DictionarySet> {
    for (dim, &n) in atoms.iter().enumerate() {
        if n == 0 {
            return Err(Error::Config(format!("dimension {dim} needs at least one atom")));
        }
        if n > cap {
            return Err(Error::ResolutionTooFine { dim, atoms: n, cap });
        }
    }
    let span = cfg.nd as f64 * cfg.ts;
    let grids = std::array::from_fn(|k| {
        let n = atoms[k];
        let step = if k < 4 { PI / n as f64 } else { span / n as f64 };
        Grid1D {
            values: (0..n).map(|i| i as f64 * step).collect(),
            kind: GRID_KINDS[k],
        }
    });
    Ok(DictionarySet::from_grids(grids, tx, rx, cfg))
}

fn progression_len(span: f64, step: f64) -> usize {
    (span / step + 1e-9).floor() as usize + 1
}

/// Union of sectors `{c − ω, c − ω + Δω, …}` around each center, clipped to
/// `[0, π]`, merged, with points closer than `Δω/2` to the previous kept
/// point dropped.
pub fn sector_grid(centers: &[f64], omega: f64, d_omega: f64) -> Vec<f64> {
    let n = progression_len(2.0 * omega, d_omega);
    let mut pts: Vec<f64> = centers
        .iter()
        .flat_map(|&c| (0..n).map(move |k| c - omega + k as f64 * d_omega))
        .filter(|v| (0.0..=PI).contains(v))
        .collect();
    pts.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last() {
            Some(&last) if p - last < d_omega / 2.0 => {}
            _ => out.push(p),
        }
    }
    out
}

/// Reduced angular grids and dictionaries (Tx-x, Tx-y, Rx-x, Rx-y).
#[derive(Debug, Clone)]
pub struct ReducedAngular {
    pub grids: [Grid1D; 4],
    pub psi: [DMatrix<Complex64>; 4],
}

/// Sectors of half-width `omega` at resolution `d_omega` around every
/// previously estimated path, per angular dimension.
pub fn build_reduced_angular(
    prev: &ChannelEstimate,
    omega: f64,
    d_omega: f64,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<ReducedAngular> {
    if prev.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    if !(omega > 0.0 && d_omega > 0.0) {
        return Err(Error::Config("sector width and resolution must be positive".into()));
    }
    let cones: Vec<[f64; 4]> = prev
        .paths
        .iter()
        .map(|p| {
            let (a, b) = cone_angles(p.dod_az, p.dod_el);
            let (c, d) = cone_angles(p.doa_az, p.doa_el);
            [a, b, c, d]
        })
        .collect();
    let dummy = WaveformConfig::default();
    let grids: [Grid1D; 4] = std::array::from_fn(|k| {
        let centers: Vec<f64> = cones.iter().map(|c| c[k]).collect();
        Grid1D {
            values: sector_grid(&centers, omega, d_omega),
            kind: GRID_KINDS[k],
        }
    });
    let psi = std::array::from_fn(|k| matrix_for(&grids[k], tx, rx, &dummy));
    Ok(ReducedAngular { grids, psi })
}

/// Reduced delay grid `{t̂_min, t̂_min + Δτ, …, t̂_min + τ̂_max + ε}`, stored
/// relative to `cfg.t_off`.
pub fn build_reduced_delay(
    prev: &ChannelEstimate,
    eps: f64,
    d_tau: f64,
    cfg: &WaveformConfig,
) -> Result<(Grid1D, DMatrix<Complex64>)> {
    build_reduced_delay_with_lead(prev, eps, d_tau, 0.0, cfg)
}

/// As [`build_reduced_delay`], with the grid also extended `lead` seconds
/// before `t̂_min`. Grid points outside the tap window are dropped.
pub fn build_reduced_delay_with_lead(
    prev: &ChannelEstimate,
    eps: f64,
    d_tau: f64,
    lead: f64,
    cfg: &WaveformConfig,
) -> Result<(Grid1D, DMatrix<Complex64>)> {
    if prev.is_empty() {
        return Err(Error::EmptyEstimate);
    }
    if !(d_tau > 0.0 && eps >= 0.0 && lead >= 0.0) {
        return Err(Error::Config("delay resolution must be positive, extensions nonnegative".into()));
    }
    let start = prev.t_min - cfg.t_off - lead;
    let n = progression_len(prev.max_tdoa() + eps + lead, d_tau);
    let hi = (cfg.nd - 1) as f64 * cfg.ts;
    let mut values: Vec<f64> = (0..n)
        .map(|k| start + k as f64 * d_tau)
        .filter(|v| (0.0..=hi).contains(v))
        .collect();
    if values.is_empty() {
        values.push(start.clamp(0.0, hi));
    }
    let grid = Grid1D {
        values,
        kind: GridKind::Delay,
    };
    let g = ArrayGeometry::new(1, 1);
    let psi = matrix_for(&grid, &g, &g, cfg);
    Ok((grid, psi))
}

/// Assembles a dictionary set from reduced angular and delay parts.
pub fn reduced_set(
    angular: ReducedAngular,
    delay: (Grid1D, DMatrix<Complex64>),
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    cfg: &WaveformConfig,
) -> DictionarySet {
    let [g0, g1, g2, g3] = angular.grids;
    let [p0, p1, p2, p3] = angular.psi;
    DictionarySet {
        psi: [p0, p1, p2, p3, delay.1],
        grids: [g0, g1, g2, g3, delay.0],
        dims: [tx.nx, tx.ny, rx.nx, rx.ny, cfg.nd],
        delay_origin: cfg.t_off,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{PathOrder, PathParams};
    use num_complex::Complex64;

    fn est(paths: &[(f64, f64, f64, f64, f64)]) -> ChannelEstimate {
        let ps = paths
            .iter()
            .map(|&(toa, dod_az, dod_el, doa_az, doa_el)| PathParams {
                gain: Complex64::new(1.0, 0.0),
                toa,
                tdoa: 0.0,
                doa_az,
                doa_el,
                dod_az,
                dod_el,
                order: PathOrder::Unknown,
            })
            .collect();
        ChannelEstimate::from_paths(0.0, ps)
    }

    #[test]
    fn two_point_full_grid() {
        let cfg = WaveformConfig::default();
        let g = ArrayGeometry::new(2, 2);
        let d = build_full(&cfg, &g, &g, [2, 2, 2, 2, cfg.nd]).unwrap();
        assert_eq!(d.grids[0].values, vec![0.0, PI / 2.0]);
        for (i, v) in d.grids[4].values.iter().enumerate() {
            assert!((v - i as f64 * 1e-9).abs() < 1e-21);
        }
    }

    #[test]
    fn nyquist_delay_column_is_a_unit_vector() {
        let cfg = WaveformConfig::default();
        let g = ArrayGeometry::new(1, 1);
        let d = build_full(&cfg, &g, &g, [1, 1, 1, 1, cfg.nd]).unwrap();
        let col = d.psi[4].column(5);
        for (n, z) in col.iter().enumerate() {
            let e = if n == 5 { 1.0 } else { 0.0 };
            assert!((z - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn resolution_cap() {
        let cfg = WaveformConfig::default();
        let g = ArrayGeometry::new(2, 2);
        let err = build_full_capped(&cfg, &g, &g, [8, 8, 8, 8, 100], 64).unwrap_err();
        assert!(matches!(err, Error::ResolutionTooFine { dim: 4, .. }));
    }

    #[test]
    fn single_sector_with_one_step() {
        let w = 0.1;
        assert_eq!(sector_grid(&[1.0], w, w).len(), 3);
        let g = sector_grid(&[1.0], w, w);
        assert!((g[0] - 0.9).abs() < 1e-15 && (g[1] - 1.0).abs() < 1e-15 && (g[2] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn operating_point_sector_size() {
        let g = sector_grid(&[1.2], 15f64.to_radians(), 0.175f64.to_radians());
        assert_eq!(g.len(), 172);
    }

    #[test]
    fn overlapping_sectors_merge_without_duplicates() {
        let (w, dw) = (0.2, 0.01);
        let centers = [1.0, 1.05, 1.0037];
        let g = sector_grid(&centers, w, dw);
        // brute force: every candidate point is either kept or within dw/2 of a kept one
        let mut all: Vec<f64> = centers
            .iter()
            .flat_map(|&c| (0..=40).map(move |k| c - w + k as f64 * dw))
            .collect();
        all.sort_by(f64::total_cmp);
        for p in &all {
            assert!(g.iter().any(|q| (q - p).abs() < dw / 2.0 + 1e-12));
        }
        assert!(g.windows(2).all(|x| x[1] - x[0] >= dw / 2.0));
        assert!(g.len() <= 3 * 41);
    }

    #[test]
    fn reduced_delay_sizes() {
        let cfg = WaveformConfig::default();
        let one = est(&[(10e-9, 0.1, 0.2, 0.3, 0.4)]);
        let (g, _) = build_reduced_delay(&one, 2e-11, 1e-11, &cfg).unwrap();
        assert_eq!(g.len(), 3);

        let two = est(&[(10e-9, 0.1, 0.2, 0.3, 0.4), (17e-9, 0.1, 0.2, 0.3, 0.4)]);
        let (g, psi) = build_reduced_delay(&two, 0.2e-9, 0.01e-9, &cfg).unwrap();
        assert_eq!(g.len(), 721);
        assert_eq!(psi.ncols(), 721);
        for (k, v) in g.values.iter().enumerate() {
            let oracle = 10e-9 + k as f64 * 0.01e-9;
            assert!((v - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn reduced_points_stay_near_previous_estimate() {
        let tx = ArrayGeometry::new(4, 4);
        let rx = ArrayGeometry::new(3, 3);
        let prev = est(&[(5e-9, 0.3, 0.7, -1.0, 0.5), (9e-9, 1.9, 0.2, 2.5, 0.9)]);
        let (w, dw) = (0.1, 0.01);
        let red = build_reduced_angular(&prev, w, dw, &tx, &rx).unwrap();
        let cones: Vec<[f64; 4]> = prev
            .paths
            .iter()
            .map(|p| {
                let (a, b) = cone_angles(p.dod_az, p.dod_el);
                let (c, d) = cone_angles(p.doa_az, p.doa_el);
                [a, b, c, d]
            })
            .collect();
        for k in 0..4 {
            assert!(red.grids[k].len() <= prev.len() * (progression_len(2.0 * w, dw)));
            for v in &red.grids[k].values {
                assert!(cones.iter().any(|c| (v - c[k]).abs() <= w + 1e-12));
            }
        }
    }

    #[test]
    fn grid_values_regenerate_columns() {
        let cfg = WaveformConfig::default();
        let tx = ArrayGeometry::new(4, 3);
        let rx = ArrayGeometry::new(2, 5);
        let d = build_full(&cfg, &tx, &rx, [7, 5, 6, 4, 32]).unwrap();
        for k in 0..5 {
            for (j, &v) in d.grids[k].values.iter().enumerate() {
                let col = atom_column(GRID_KINDS[k], v, &tx, &rx, &cfg);
                for (r, z) in col.iter().enumerate() {
                    assert!((d.psi[k][(r, j)] - z).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn empty_estimate_is_rejected() {
        let cfg = WaveformConfig::default();
        let g = ArrayGeometry::new(2, 2);
        let empty = ChannelEstimate::from_paths(0.0, vec![]);
        assert!(matches!(build_reduced_angular(&empty, 0.1, 0.01, &g, &g), Err(Error::EmptyEstimate)));
        assert!(matches!(build_reduced_delay(&empty, 0.1, 0.01, &cfg), Err(Error::EmptyEstimate)));
    }
}
