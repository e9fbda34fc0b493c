//! The per-frame loop: beam planning, sparse estimation, labelling,
//! localization with dead-reckoning fallback, and Kalman smoothing.

use std::collections::VecDeque;

use nalgebra::{DVector, DMatrix, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classify::{classify_paths, ClassifyContext};
use super::kf::{kf_update, KfParams, KfState};
use crate::dict::{
    build_full, build_reduced_angular, build_reduced_delay_with_lead, reduced_set, DictionarySet,
};
use crate::estimate::ChannelEstimate;
use crate::locate::{
    dead_reckon, dead_reckoned_estimate, localizable, solve_position, LocalizationInput, LocalizationMode,
    PositionEstimate,
};
use crate::momp::{estimate_channel, residual_batch, MompProblem, SolverOptions, SparseSolution};
use crate::scene::{paths_in_window, Scene, TrajectoryFrame};
use crate::signal::{
    beams, cone_angles, measure_paths, ArrayGeometry, BeamformerSet, MeasurementBatch,
    PathOrder, PathParams, WaveformConfig, DELAY_GUARD_TAPS,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    pub waveform: WaveformConfig,
    /// Tracking period T_p, s.
    pub tp: f64,
    pub n_est: usize,
    /// Reduced angular sector half-width ω, degrees.
    pub omega_deg: f64,
    /// Reduced angular resolution Δω, degrees.
    pub d_omega_deg: f64,
    /// Reduced delay extension ε past the largest TDoA, s.
    pub eps: f64,
    /// Reduced delay resolution Δτ, s.
    pub d_tau: f64,
    /// Reduced delay extension before t̂_min, s.
    pub delay_lead: f64,
    /// Frames between full re-estimations.
    pub full_period: usize,
    /// Full-dictionary sizes `[N_1^a … N_5^a]` for initial access.
    pub ia_atoms: [usize; 5],
    pub ia_measurements: usize,
    pub ia_rf_chains: usize,
    pub ia_coarse_budget: usize,
    /// Sector half-width of the fine pass after initial access, degrees.
    pub ia_refine_omega_deg: f64,
    pub track_coarse_budget: usize,
    pub refine_sweeps: usize,
    pub n_starts: usize,
    pub classify_threshold: f64,
    pub min_bounce_deg: f64,
    pub los_max_bend_deg: f64,
    pub los_window: f64,
    /// Speedometer relative error bound.
    pub speed_error: f64,
    /// Largest accepted height error of a geometric fix, m (the panel
    /// height is known).
    pub max_height_error: f64,
    pub kf: KfParams,
    /// Window length C and stride 𝓘 of the exported history.
    pub window: usize,
    pub interval: usize,
    pub history_source: HistorySource,
}

/// Which position the `(Ẑ, x̂)` history keeps for each frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySource {
    /// The tracker's own fix; nothing downstream feeds back.
    #[default]
    PreCorrection,
    /// The corrector's output, once supplied through
    /// [`Tracker::apply_correction`].
    PostCorrection,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            waveform: WaveformConfig::default(),
            tp: 0.5e-3,
            n_est: 5,
            omega_deg: 15.0,
            d_omega_deg: 0.175,
            eps: 0.2e-9,
            d_tau: 0.01e-9,
            delay_lead: 0.2e-9,
            full_period: 200,
            ia_atoms: [32, 32, 24, 24, 256],
            ia_measurements: 64,
            ia_rf_chains: 4,
            ia_coarse_budget: 500_000,
            ia_refine_omega_deg: 6.0,
            track_coarse_budget: 20_000,
            refine_sweeps: 3,
            n_starts: 2,
            classify_threshold: 0.3,
            min_bounce_deg: 2.0,
            los_max_bend_deg: 10.0,
            los_window: 0.5e-9,
            speed_error: 0.05,
            max_height_error: 0.5,
            kf: KfParams::default(),
            window: 16,
            interval: 25,
            history_source: HistorySource::PreCorrection,
        }
    }
}

impl TrackingConfig {
    /// `∏ N_k^a` of full dictionaries spanning the whole angular and delay
    /// range at the tracking resolutions.
    pub fn matched_full_space(&self) -> f64 {
        let ang = (std::f64::consts::PI / self.d_omega_deg.to_radians()).round();
        let del = (self.waveform.nd as f64 * self.waveform.ts / self.d_tau).round();
        ang.powi(4) * del
    }
}

/// Per-frame output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameOutput {
    pub index: usize,
    pub t: f64,
    pub full: bool,
    pub panel: usize,
    pub estimate: ChannelEstimate,
    /// Vehicle position estimate x̂.
    pub position: PositionEstimate,
    pub kf_xy: [f64; 2],
    pub truth_xy: [f64; 2],
    pub speed: [f64; 2],
    /// `∏ N_k^a` searched this frame.
    pub search_space: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    pub prev_estimate: Option<ChannelEstimate>,
    pub prev_xy: Option<Vector2<f64>>,
    pub prev_speed: Vector2<f64>,
    pub prev_panel: Option<usize>,
    pub frame_index: usize,
    pub kf: Option<KfState>,
    /// Most recent `(Ẑ, x̂)` pairs, capacity C·𝓘.
    pub history: VecDeque<(ChannelEstimate, PositionEstimate)>,
    pub capacity: usize,
}

impl TrackerState {
    pub fn new(capacity: usize) -> Self {
        Self {
            prev_estimate: None,
            prev_xy: None,
            prev_speed: Vector2::zeros(),
            prev_panel: None,
            frame_index: 0,
            kf: None,
            history: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    fn push(&mut self, z: ChannelEstimate, x: PositionEstimate) {
        if self.history.len() == self.capacity {
            self.history.pop_front();
        }
        self.history.push_back((z, x));
    }
}

pub struct Tracker<'s> {
    pub cfg: TrackingConfig,
    pub scene: &'s Scene,
    pub tx: ArrayGeometry,
    pub pilot: Vec<f64>,
    pub state: TrackerState,
    seed: u64,
}

fn frame_seed(seed: u64, index: usize, stream: u64) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Separable steered beams around a direction with ±1/N offsets per axis.
fn offset_beams(geom: &ArrayGeometry, az: f64, el: f64) -> Vec<DVector<nalgebra::Complex<f64>>> {
    let (px, py) = cone_angles(az, el);
    let (ux, uy) = (px.cos(), py.cos());
    let (dx, dy) = (1.0 / geom.nx as f64, 1.0 / geom.ny as f64);
    [(0.0, 0.0), (dx, 0.0), (-dx, 0.0), (0.0, dy), (0.0, -dy)]
        .iter()
        .map(|(ox, oy)| DVector::from_vec(beams::steered_beam(geom, ux + ox, uy + oy)))
        .collect()
}

/// Tracking beams: for each previous path, five precoders around its DoD,
/// each combined by five columns around its DoA.
pub fn tracking_beams(
    prev: &ChannelEstimate,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    pilot: &[f64],
) -> Result<BeamformerSet> {
    let mut precoders = Vec::new();
    let mut combiners = Vec::new();
    for p in &prev.paths {
        let w = offset_beams(rx, p.doa_az, p.doa_el);
        for f in offset_beams(tx, p.dod_az, p.dod_el) {
            precoders.push(f);
            combiners.push(DMatrix::from_columns(&w));
        }
    }
    let n = precoders.len();
    BeamformerSet::new(precoders, combiners, vec![pilot.to_vec(); n])
}

/// Start of the receive window placing `t_first` four taps in.
pub fn window_origin(t_first: f64, cfg: &WaveformConfig) -> f64 {
    cfg.ts * (t_first / cfg.ts).floor() - DELAY_GUARD_TAPS * cfg.ts
}

/// Estimation half of a frame: dictionaries + MOMP on a given batch.
///
/// Without `prev` the full (initial-access) dictionaries are searched and
/// refined. With `prev` the reduced dictionaries around it are searched;
/// `full` additionally runs the initial-access search on the same batch and
/// keeps whichever explains the measurements better. Returns the estimate,
/// `∏ N_k^a` searched and the atom evaluations spent.
pub fn estimate_frame(
    cfg: &TrackingConfig,
    prev: Option<&ChannelEstimate>,
    full: bool,
    batch: &MeasurementBatch,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    t: f64,
) -> Result<(ChannelEstimate, f64, u64)> {
    let wf = &batch.cfg;
    let solve = |dict: &DictionarySet, hints: Vec<[usize; 5]>, budget: usize, n_paths: usize| {
        let problem = MompProblem {
            batch,
            dict,
            n_paths,
            options: SolverOptions {
                refine_sweeps: cfg.refine_sweeps,
                coarse_budget: budget,
                n_starts: cfg.n_starts,
            },
            hints,
        };
        estimate_channel(&problem, t)
    };
    let reduced = |prev: &ChannelEstimate, omega: f64, eps: f64, lead: f64| -> Result<DictionarySet> {
        let ang = build_reduced_angular(prev, omega, cfg.d_omega_deg.to_radians(), tx, rx)?;
        let del = build_reduced_delay_with_lead(prev, eps, cfg.d_tau, lead, wf)?;
        Ok(reduced_set(ang, del, tx, rx, wf))
    };
    let tracked = match prev {
        Some(prev) => {
            let dict = reduced(prev, cfg.omega_deg.to_radians(), cfg.eps, cfg.delay_lead)?;
            let hints = prev.paths.iter().map(|p| dict.nearest_atom(p)).collect();
            let (est, sol) = solve(&dict, hints, cfg.track_coarse_budget, cfg.n_est)?;
            Some((est, sol.residual_norm, dict.atom_count(), sol.diagnostics.evaluations))
        }
        None => None,
    };
    if !full {
        if let Some((est, _, space, evals)) = tracked {
            return Ok((est, space, evals));
        }
    }
    // Initial access, one path at a time: a coarse full-range search on
    // what the finely fitted paths so far leave unexplained, then a fine
    // joint refit of all of them on the original measurements.
    let full_dict = build_full(wf, tx, rx, cfg.ia_atoms)?;
    let step = wf.nd as f64 * wf.ts / cfg.ia_atoms[4] as f64;
    let omega = cfg.ia_refine_omega_deg.to_radians();
    let mut evals = 0;
    let mut fitted: Option<(ChannelEstimate, SparseSolution, DictionarySet)> = None;
    for k in 1..=cfg.n_est {
        let resid = match &fitted {
            Some((_, sol, dict)) => residual_batch(batch, dict, sol)?,
            None => batch.clone(),
        };
        let problem = MompProblem {
            batch: &resid,
            dict: &full_dict,
            n_paths: 1,
            options: SolverOptions {
                refine_sweeps: cfg.refine_sweeps,
                coarse_budget: cfg.ia_coarse_budget,
                n_starts: cfg.n_starts,
            },
            hints: vec![],
        };
        let (cand, s1) = estimate_channel(&problem, t)?;
        evals += s1.diagnostics.evaluations;
        if cand.is_empty() || s1.coeffs.iter().all(|c| c.norm() == 0.0) {
            break;
        }
        let mut union: Vec<PathParams> = fitted.as_ref().map_or(vec![], |f| f.0.paths.clone());
        union.extend(cand.paths);
        let union = ChannelEstimate::from_paths(t, union);
        let dict = reduced(&union, omega, step, step)?;
        let hints = union.paths.iter().map(|p| dict.nearest_atom(p)).collect();
        let (est, sol) = solve(&dict, hints, cfg.track_coarse_budget, k)?;
        evals += sol.diagnostics.evaluations;
        fitted = Some((est, sol, dict));
    }
    let Some((est, fine, _)) = fitted else {
        return Ok((ChannelEstimate::from_paths(t, vec![]), full_dict.atom_count(), evals));
    };
    let space = full_dict.atom_count();
    let s2 = fine;
    Ok(match tracked {
        Some((t_est, t_res, _, t_evals)) => {
            evals += t_evals;
            if t_res < s2.residual_norm {
                (t_est, space, evals)
            } else {
                (est, space, evals)
            }
        }
        None => (est, space, evals),
    })
}

impl<'s> Tracker<'s> {
    pub fn new(cfg: TrackingConfig, scene: &'s Scene, seed: u64) -> Self {
        let capacity = cfg.window * cfg.interval;
        let pilot = beams::hadamard_row(cfg.waveform.q, 1);
        Self {
            tx: scene.bs_array(),
            cfg,
            scene,
            pilot,
            state: TrackerState::new(capacity),
            seed,
        }
    }

    fn speedometer(&self, frame: &TrajectoryFrame) -> Vector2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.seed, frame.index, 2));
        let e = self.cfg.speed_error;
        let k = if e > 0.0 { 1.0 + rng.random_range(-e..=e) } else { 1.0 };
        Vector2::new(frame.velocity.x, frame.velocity.y) * k
    }

    /// Senses and processes one frame. Never fails for a valid frame: any
    /// estimation or localization failure degrades to dead reckoning.
    pub fn step(&mut self, frame: &TrajectoryFrame) -> FrameOutput {
        let rx = frame.rx_array(self.scene);
        let panel_changed = self.state.prev_panel.is_some_and(|p| p != frame.active_panel);
        let full = self.state.frame_index.is_multiple_of(self.cfg.full_period)
            || panel_changed
            || self.state.prev_estimate.as_ref().is_none_or(|e| e.is_empty());

        let mut wf = self.cfg.waveform.clone();
        // Full re-estimation re-acquires timing from the sync preamble.
        let t_first = match (&self.state.prev_estimate, full) {
            (Some(prev), false) => prev.t_min,
            _ => frame.true_paths.first().map_or(0.0, |p| p.toa),
        };
        wf.t_off = window_origin(t_first, &wf);

        let sensed = self.sense(frame, &rx, &wf, full);
        let (estimate, search_space, evaluations) = match sensed {
            Ok(batch) => {
                // A panel change invalidates the previous angles.
                let prev = if panel_changed { None } else { self.state.prev_estimate.as_ref() };
                estimate_frame(&self.cfg, prev, full, &batch, &self.tx, &rx, frame.t)
                    .unwrap_or_else(|_| (ChannelEstimate::from_paths(frame.t, vec![]), 0.0, 0))
            }
            Err(_) => (ChannelEstimate::from_paths(frame.t, vec![]), 0.0, 0),
        };
        self.finish(frame, &rx, estimate, full, search_space, evaluations)
    }

    /// Labels `est` and solves for the panel position, pruning first-order
    /// paths while the fix is geometrically inconsistent.
    fn label_and_fix(
        &self,
        est: &mut ChannelEstimate,
        ctx: &ClassifyContext,
        rx: &ArrayGeometry,
        z_panel: f64,
    ) -> Option<PositionEstimate> {
        let labels = classify_paths(est, ctx);
        for (p, l) in est.paths.iter_mut().zip(labels) {
            p.order = l;
        }
        let solve = |paths: &[PathParams]| {
            let inp = LocalizationInput::new(self.tx.origin, self.tx.orientation, rx.orientation, paths.to_vec());
            solve_position(&inp).ok().filter(|f| {
                f.converged
                    && f.xyz.iter().all(|v| v.is_finite())
                    && (f.xyz[2] - z_panel).abs() <= self.cfg.max_height_error
            })
        };
        let consistent = |f: &PositionEstimate, paths: &[PathParams]| {
            let used = paths.iter().filter(|p| matches!(p.order, PathOrder::Los | PathOrder::FirstOrder)).count();
            f.residual <= ctx.threshold * (used as f64).sqrt()
        };
        let mut paths = est.paths.clone();
        loop {
            localizable(&paths)?;
            if let Some(f) = solve(&paths).filter(|f| consistent(f, &paths)) {
                est.paths = paths;
                return Some(f);
            }
            // drop the first-order path whose removal fits best
            let best = (0..paths.len())
                .filter(|&i| paths[i].order == PathOrder::FirstOrder)
                .filter_map(|i| {
                    let mut trial = paths.clone();
                    trial[i].order = PathOrder::HigherOrder;
                    localizable(&trial)?;
                    let r = solve(&trial).map_or(f64::INFINITY, |f| f.residual);
                    Some((r, i))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?;
            paths[best.1].order = PathOrder::HigherOrder;
        }
    }

    fn sense(
        &self,
        frame: &TrajectoryFrame,
        rx: &ArrayGeometry,
        wf: &WaveformConfig,
        full: bool,
    ) -> Result<MeasurementBatch> {
        let beams = match (&self.state.prev_estimate, full) {
            (Some(prev), false) => tracking_beams(prev, &self.tx, rx, &self.pilot)?,
            _ => beams::random_beams(
                &self.tx,
                rx,
                self.cfg.ia_measurements,
                self.cfg.ia_rf_chains,
                &self.pilot,
                frame_seed(self.seed, frame.index, 0),
            ),
        };
        let paths = paths_in_window(&frame.true_paths, wf);
        measure_paths(&paths, &self.tx, rx, &beams, wf, frame_seed(self.seed, frame.index, 1))
    }

    /// Hands the corrected position `x*` for the latest frame back to the
    /// tracker. Only [`HistorySource::PostCorrection`] stores it (in the
    /// history, not in the dead-reckoning state); returns whether it did.
    pub fn apply_correction(&mut self, x_star: [f64; 2]) -> bool {
        if self.cfg.history_source != HistorySource::PostCorrection {
            return false;
        }
        match self.state.history.back_mut() {
            Some((_, x)) => {
                x.xy = x_star;
                x.xyz[0] = x_star[0];
                x.xyz[1] = x_star[1];
                true
            }
            None => false,
        }
    }

    fn finish(
        &mut self,
        frame: &TrajectoryFrame,
        rx: &ArrayGeometry,
        mut estimate: ChannelEstimate,
        full: bool,
        search_space: f64,
        evaluations: u64,
    ) -> FrameOutput {
        let tp = self.cfg.tp;
        let offset = frame.heading * self.scene.vehicle.panels[frame.active_panel].offset;
        let z = frame.position.z;
        let dr = self
            .state
            .prev_xy
            .map(|p| dead_reckon(p, self.state.prev_speed, tp));
        let prior = dr.map(|p| Vector3::new(p.x, p.y, z) + offset);

        let ctx = ClassifyContext {
            bs_position: self.tx.origin,
            bs_orientation: self.tx.orientation,
            rx_orientation: rx.orientation,
            rx_prior: prior,
            threshold: self.cfg.classify_threshold,
            min_bounce_angle: self.cfg.min_bounce_deg.to_radians(),
            los_max_bend: self.cfg.los_max_bend_deg.to_radians(),
            los_window: self.cfg.los_window,
        };
        let z_panel = z + offset.z;
        let mut fix = None;
        if !estimate.is_empty() {
            fix = self.label_and_fix(&mut estimate, &ctx, rx, z_panel);
            if fix.is_none() && ctx.rx_prior.is_some() {
                // A stale prior can reject the LOS; relabel without it.
                let ctx = ClassifyContext { rx_prior: None, ..ctx.clone() };
                let mut alt = estimate.clone();
                if let Some(f) = self.label_and_fix(&mut alt, &ctx, rx, z_panel) {
                    estimate = alt;
                    fix = Some(f);
                }
            }
        }
        let position = match (fix, self.state.prev_xy) {
            (Some(f), _) => {
                let v = Vector3::from(f.xyz) - offset;
                PositionEstimate {
                    xyz: [v.x, v.y, v.z],
                    xy: [v.x, v.y],
                    ..f
                }
            }
            (None, Some(prev)) => dead_reckoned_estimate(prev, self.state.prev_speed, tp, z),
            (None, None) => first_frame_guess(&estimate, &self.tx, z, offset),
        };

        let speed = self.speedometer(frame);
        let xy = position.planar();
        let (kf, kf_xy) = match &self.state.kf {
            None => {
                let kf = KfState::new(xy, speed, self.cfg.kf);
                (kf, xy)
            }
            Some(kf) => kf_update(kf, xy, tp),
        };

        self.state.kf = Some(kf);
        self.state.prev_xy = Some(xy);
        self.state.prev_speed = speed;
        self.state.prev_panel = Some(frame.active_panel);
        self.state.frame_index += 1;
        self.state.prev_estimate = (!estimate.is_empty()).then(|| estimate.clone());
        self.state.push(estimate.clone(), position);

        FrameOutput {
            index: frame.index,
            t: frame.t,
            full,
            panel: frame.active_panel,
            estimate,
            position,
            kf_xy: [kf_xy.x, kf_xy.y],
            truth_xy: [frame.position.x, frame.position.y],
            speed: [speed.x, speed.y],
            search_space,
            evaluations,
        }
    }
}

/// Without any fix or history: where the strongest departure ray meets the
/// roof-height plane (or 10 m out along it).
fn first_frame_guess(
    est: &ChannelEstimate,
    tx: &ArrayGeometry,
    z: f64,
    offset: Vector3<f64>,
) -> PositionEstimate {
    let p = match est.paths.first() {
        Some(p) => {
            let d = tx.to_world(&p.dod());
            let s = if d.z < -1e-6 { (z - tx.origin.z) / d.z } else { 10.0 };
            tx.origin + d * s - offset
        }
        None => tx.origin,
    };
    PositionEstimate {
        xyz: [p.x, p.y, z],
        xy: [p.x, p.y],
        mode: LocalizationMode::DeadReckoning,
        residual: 0.0,
        converged: false,
    }
}

/// Runs a whole trajectory.
pub fn track_trajectory(
    cfg: &TrackingConfig,
    scene: &Scene,
    frames: &[TrajectoryFrame],
    seed: u64,
) -> Vec<FrameOutput> {
    let mut tracker = Tracker::new(cfg.clone(), scene, seed);
    frames.iter().map(|f| tracker.step(f)).collect()
}
