//! Synthetic urban-canyon scenes and vehicle trajectories.
//!
//! Propagation paths come from the image method: the LOS ray, one bounce per
//! visible reflector (walls and ground) and optionally two bounces. Each
//! path's gain is free-space loss times the reflectors' coefficients with
//! carrier phase from the path length.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::signal::{
    channel_taps, ArrayGeometry, ChannelTensor, PathOrder, PathParams,
    WaveformConfig, SPEED_OF_LIGHT,
};
use crate::{Error, Result};

/// Vertical rectangular reflector. `center` is the bottom edge midpoint;
/// the wall spans `±half_length` along `up × normal` and `[0, height]` in z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub center: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub half_length: f64,
    pub height: f64,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub y: f64,
    pub half_width: f64,
    pub speed_limit_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub position: Vector3<f64>,
    /// World-frame boresight.
    pub facing: Vector3<f64>,
    pub nx: usize,
    pub ny: usize,
}

/// Roof panel in vehicle coordinates (x forward, z up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub offset: Vector3<f64>,
    pub facing: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    /// Height of the roof reference point.
    pub roof_height: f64,
    pub panels: Vec<Panel>,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blockage {
    /// Poisson rate of LOS blockage onsets, 1/s.
    pub rate_hz: f64,
    /// Mean blockage duration, s.
    pub mean_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bs: BaseStation,
    pub walls: Vec<Wall>,
    /// Reflection loss of the ground plane z = 0; `None` disables it.
    pub ground_loss_db: Option<f64>,
    pub lanes: Vec<Lane>,
    pub vehicle: Vehicle,
    pub blockage: Blockage,
    pub double_bounce: bool,
    /// Upper bound of the per-trajectory clock offset, s.
    pub max_clock_offset: f64,
    pub fc: f64,
}

/// Local-to-world rotation whose z axis is `facing` and whose x axis is
/// horizontal.
pub fn frame_from_boresight(facing: &Vector3<f64>) -> Matrix3<f64> {
    let z = facing.normalize();
    let up = Vector3::z();
    let x = up.cross(&z);
    let x = if x.norm() < 1e-9 {
        Vector3::x()
    } else {
        x.normalize()
    };
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

fn tilted(h: Vector3<f64>, tilt_deg: f64) -> Vector3<f64> {
    let t = tilt_deg.to_radians();
    h * t.cos() + Vector3::z() * t.sin()
}

impl Scene {
    /// Two-wall street canyon along x with a four-lane road and a pole-mounted
    /// BS on the north side facing south and down.
    pub fn urban_canyon() -> Self {
        let wall = |y: f64, ny: f64| Wall {
            center: Vector3::new(0.0, y, 0.0),
            normal: Vector3::new(0.0, ny, 0.0),
            half_length: 200.0,
            height: 30.0,
            loss_db: 6.0,
        };
        let lane = |y: f64| Lane {
            y,
            half_width: 1.75,
            speed_limit_kmh: 60.0,
        };
        let panel = |x: f64, y: f64, h: Vector3<f64>| Panel {
            offset: Vector3::new(x, y, 0.0),
            facing: tilted(h, 30.0),
        };
        Self {
            bs: BaseStation {
                position: Vector3::new(0.0, 8.5, 6.0),
                facing: tilted(-Vector3::y(), -15.0),
                nx: 16,
                ny: 16,
            },
            walls: vec![wall(-9.0, 1.0), wall(9.0, -1.0)],
            ground_loss_db: Some(10.0),
            lanes: [-5.25, -1.75, 1.75, 5.25].into_iter().map(lane).collect(),
            vehicle: Vehicle {
                roof_height: 1.6,
                panels: vec![
                    panel(1.0, 0.0, Vector3::x()),
                    panel(-1.0, 0.0, -Vector3::x()),
                    panel(0.0, 0.8, Vector3::y()),
                    panel(0.0, -0.8, -Vector3::y()),
                ],
                nx: 12,
                ny: 12,
            },
            blockage: Blockage {
                rate_hz: 0.2,
                mean_duration_s: 0.1,
            },
            double_bounce: true,
            max_clock_offset: 50e-9,
            fc: 73e9,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("scene", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.walls.iter().enumerate() {
            if (w.normal.norm() - 1.0).abs() > 1e-9 || w.normal.z.abs() > 1e-9 {
                return Err(Error::Config(format!("wall {i}: normal must be horizontal and unit length")));
            }
            if w.loss_db < 0.0 {
                return Err(Error::Config(format!("wall {i}: negative reflection loss")));
            }
        }
        if self.ground_loss_db.is_some_and(|l| l < 0.0) {
            return Err(Error::Config("negative ground loss".into()));
        }
        if self.vehicle.panels.is_empty() {
            return Err(Error::Config("vehicle has no panels".into()));
        }
        Ok(())
    }

    pub fn bs_array(&self) -> ArrayGeometry {
        ArrayGeometry::new(self.bs.nx, self.bs.ny)
            .with_pose(frame_from_boresight(&self.bs.facing), self.bs.position)
    }

    /// World pose of panel `i` for a vehicle at `position` with `heading`.
    pub fn panel_array(&self, i: usize, position: &Vector3<f64>, heading: &Matrix3<f64>) -> ArrayGeometry {
        let p = &self.vehicle.panels[i];
        ArrayGeometry::new(self.vehicle.nx, self.vehicle.ny)
            .with_pose(heading * frame_from_boresight(&p.facing), position + heading * p.offset)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    fn reflectors(&self) -> Vec<Reflector> {
        let mut out: Vec<Reflector> = self
            .walls
            .iter()
            .map(|w| Reflector {
                normal: w.normal,
                offset: w.normal.dot(&w.center),
                coef: 10f64.powf(-w.loss_db / 20.0),
                extent: Some((w.center, w.half_length, w.height)),
            })
            .collect();
        if let Some(loss) = self.ground_loss_db {
            out.push(Reflector {
                normal: Vector3::z(),
                offset: 0.0,
                coef: 10f64.powf(-loss / 20.0),
                extent: None,
            });
        }
        out
    }
}

/// Plane `n·x = offset` with an optional finite vertical extent.
#[derive(Debug, Clone)]
struct Reflector {
    normal: Vector3<f64>,
    offset: f64,
    coef: f64,
    extent: Option<(Vector3<f64>, f64, f64)>,
}

impl Reflector {
    fn side(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn mirror(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - 2.0 * self.side(p) * self.normal
    }

    /// Point where segment `a → b` crosses the plane, if inside the extent.
    fn hit(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Option<Vector3<f64>> {
        let d = b - a;
        let den = self.normal.dot(&d);
        if den.abs() < 1e-15 {
            return None;
        }
        let t = -self.side(a) / den;
        if !(1e-12..=1.0 - 1e-12).contains(&t) {
            return None;
        }
        let s = a + t * d;
        if let Some((c, half, height)) = self.extent {
            let along = Vector3::z().cross(&self.normal);
            if along.dot(&(s - c)).abs() > half || s.z < 0.0 || s.z > height {
                return None;
            }
        }
        Some(s)
    }
}

/// Geometric path before gain/angle conversion.
#[derive(Debug, Clone)]
pub struct RayPath {
    /// Interaction points in travel order (empty for LOS).
    pub bounces: Vec<Vector3<f64>>,
    pub length: f64,
    pub coef: f64,
}

impl RayPath {
    pub fn order(&self) -> PathOrder {
        match self.bounces.len() {
            0 => PathOrder::Los,
            1 => PathOrder::FirstOrder,
            _ => PathOrder::HigherOrder,
        }
    }
}

/// All geometric rays from `tx` to `rx` up to the configured bounce order.
pub fn trace_rays(scene: &Scene, tx: &Vector3<f64>, rx: &Vector3<f64>, los: bool) -> Vec<RayPath> {
    let refl = scene.reflectors();
    let mut out = Vec::new();
    if los {
        out.push(RayPath {
            bounces: vec![],
            length: (rx - tx).norm(),
            coef: 1.0,
        });
    }
    for r in &refl {
        if r.side(tx) <= 0.0 || r.side(rx) <= 0.0 {
            continue;
        }
        let image = r.mirror(tx);
        if let Some(s) = r.hit(&image, rx) {
            out.push(RayPath {
                bounces: vec![s],
                length: (rx - image).norm(),
                coef: r.coef,
            });
        }
    }
    if scene.double_bounce {
        for (i, a) in refl.iter().enumerate() {
            for (j, b) in refl.iter().enumerate() {
                if i == j || a.side(tx) <= 0.0 || b.side(rx) <= 0.0 {
                    continue;
                }
                let i1 = a.mirror(tx);
                let i2 = b.mirror(&i1);
                let Some(s2) = b.hit(&i2, rx) else { continue };
                let Some(s1) = a.hit(&i1, &s2) else { continue };
                if b.side(&s1) <= 0.0 || a.side(&s2) <= 0.0 {
                    continue;
                }
                out.push(RayPath {
                    bounces: vec![s1, s2],
                    length: (rx - i2).norm(),
                    coef: a.coef * b.coef,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub index: usize,
    pub t: f64,
    /// Roof reference point of the vehicle.
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Vehicle-to-world rotation.
    pub heading: Matrix3<f64>,
    pub active_panel: usize,
    /// Position of the active panel (what geometric localization recovers).
    pub rx_position: Vector3<f64>,
    pub rx_orientation: Matrix3<f64>,
    pub clock_offset: f64,
    pub los_blocked: bool,
    /// Sorted by ToA; DoD in the BS frame, DoA in the active panel's frame.
    pub true_paths: Vec<PathParams>,
}

impl TrajectoryFrame {
    pub fn rx_array(&self, scene: &Scene) -> ArrayGeometry {
        scene.panel_array(self.active_panel, &self.position, &self.heading)
    }

    /// Vehicle roof point implied by a panel position estimate.
    pub fn vehicle_from_panel(&self, scene: &Scene, panel_xyz: &Vector3<f64>) -> Vector3<f64> {
        panel_xyz - self.heading * scene.vehicle.panels[self.active_panel].offset
    }
}

/// Ray to [`PathParams`] with the given array poses. `None` when the ray is
/// outside either array's front hemisphere.
fn to_params(
    ray: &RayPath,
    bs: &ArrayGeometry,
    rx: &ArrayGeometry,
    lambda: f64,
    clock_offset: f64,
) -> Option<PathParams> {
    let first = ray.bounces.first().unwrap_or(&rx.origin);
    let last = ray.bounces.last().unwrap_or(&bs.origin);
    let dod = (first - bs.origin).normalize();
    let doa = (last - rx.origin).normalize();
    if !bs.faces(&dod) || !rx.faces(&doa) {
        return None;
    }
    let (dod_az, dod_el) = bs.local_angles(&dod);
    let (doa_az, doa_el) = rx.local_angles(&doa);
    let amp = lambda / (4.0 * std::f64::consts::PI * ray.length) * ray.coef;
    let phase = -2.0 * std::f64::consts::PI * ray.length / lambda;
    Some(PathParams {
        gain: Complex64::from_polar(amp, phase),
        toa: ray.length / SPEED_OF_LIGHT + clock_offset,
        tdoa: 0.0,
        doa_az,
        doa_el,
        dod_az,
        dod_el,
        order: ray.order(),
    })
}

fn sort_and_reference(paths: &mut [PathParams]) {
    paths.sort_by(|a, b| a.toa.total_cmp(&b.toa));
    let t0 = paths.first().map_or(0.0, |p| p.toa);
    for p in paths.iter_mut() {
        p.tdoa = p.toa - t0;
    }
}

/// Paths seen by every panel; the active panel is the one with the most
/// received path energy (ties → lowest index).
pub fn frame_paths(
    scene: &Scene,
    position: &Vector3<f64>,
    heading: &Matrix3<f64>,
    los_blocked: bool,
    clock_offset: f64,
) -> (usize, Vec<PathParams>) {
    let bs = scene.bs_array();
    let lambda = scene.wavelength();
    let mut best: Option<(usize, f64, Vec<PathParams>)> = None;
    for i in 0..scene.vehicle.panels.len() {
        let rx = scene.panel_array(i, position, heading);
        let rays = trace_rays(scene, &bs.origin, &rx.origin, !los_blocked);
        let mut paths: Vec<PathParams> = rays
            .iter()
            .filter_map(|r| to_params(r, &bs, &rx, lambda, clock_offset))
            .collect();
        sort_and_reference(&mut paths);
        let energy: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
        if best.as_ref().is_none_or(|b| energy > b.1) {
            best = Some((i, energy, paths));
        }
    }
    let (i, _, paths) = best.expect("scene has panels");
    (i, paths)
}

/// Poisson blockage intervals `[start, end)` over `[0, duration)`.
fn blockage_intervals(b: &Blockage, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    if b.rate_hz <= 0.0 || b.mean_duration_s <= 0.0 {
        return out;
    }
    let gap = Exp::new(b.rate_hz).expect("positive rate");
    let len = Exp::new(1.0 / b.mean_duration_s).expect("positive duration");
    let mut t = gap.sample(rng);
    while t < duration {
        let end = t + len.sample(rng);
        out.push((t, end));
        t = end + gap.sample(rng);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub start_xy: [f64; 2],
    pub speed_kmh: f64,
    pub duration: f64,
    pub tp: f64,
    pub seed: u64,
}

/// Straight constant-speed drive along +x sampled every `tp`.
pub fn generate_trajectory(scene: &Scene, spec: &TrajectorySpec) -> Result<Vec<TrajectoryFrame>> {
    let [x0, y0] = spec.start_xy;
    if !scene.lanes.iter().any(|l| (y0 - l.y).abs() <= l.half_width) {
        return Err(Error::StartOutsideLane { x: x0, y: y0 });
    }
    if spec.speed_kmh <= 0.0 || spec.duration <= 0.0 || spec.tp <= 0.0 {
        return Err(Error::Config("speed, duration and tp must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clock_offset = rng.random_range(0.0..=scene.max_clock_offset);
    let blocks = blockage_intervals(&scene.blockage, spec.duration, &mut rng);
    let v = spec.speed_kmh / 3.6;
    let n = (spec.duration / spec.tp).round() as usize;
    let heading = Matrix3::identity();
    let velocity = Vector3::new(v, 0.0, 0.0);
    let frames = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * spec.tp;
            let position = Vector3::new(x0 + v * t, y0, scene.vehicle.roof_height);
            let blocked = blocks.iter().any(|&(a, b)| t >= a && t < b);
            let (panel, true_paths) = frame_paths(scene, &position, &heading, blocked, clock_offset);
            let rx = scene.panel_array(panel, &position, &heading);
            TrajectoryFrame {
                index: k,
                t,
                position,
                velocity,
                heading,
                active_panel: panel,
                rx_position: rx.origin,
                rx_orientation: rx.orientation,
                clock_offset,
                los_blocked: blocked,
                true_paths,
            }
        })
        .collect();
    Ok(frames)
}

/// True paths whose delay fits the receive window of `cfg`.
pub fn paths_in_window(paths: &[PathParams], cfg: &WaveformConfig) -> Vec<PathParams> {
    paths
        .iter()
        .filter(|p| {
            let d = p.toa - cfg.t_off;
            d >= 0.0 && d <= cfg.max_delay()
        })
        .cloned()
        .collect()
}

pub fn frame_to_channel(frame: &TrajectoryFrame, scene: &Scene, cfg: &WaveformConfig) -> Result<ChannelTensor> {
    channel_taps(&frame.true_paths, cfg, &scene.bs_array(), &frame.rx_array(scene))
}

pub fn write_trajectory_jsonl(frames: &[TrajectoryFrame], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for f in frames {
        let line = serde_json::to_string(f).map_err(|e| Error::json("trajectory frame", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrajectoryFrame>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

/// Sanity helper for tests and examples: world directions of a path.
pub fn world_directions(p: &PathParams, bs: &ArrayGeometry, rx: &ArrayGeometry) -> (Vector3<f64>, Vector3<f64>) {
    (bs.to_world(&p.dod()), rx.to_world(&p.doa()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(duration: f64, seed: u64) -> TrajectorySpec {
        TrajectorySpec {
            start_xy: [-25.0, -5.25],
            speed_kmh: 60.0,
            duration,
            tp: 0.5e-3,
            seed,
        }
    }

    #[test]
    fn six_thousand_frames_at_lane_speed() {
        let mut scene = Scene::urban_canyon();
        scene.double_bounce = false;
        let frames = generate_trajectory(&scene, &spec(3.0, 1)).unwrap();
        assert_eq!(frames.len(), 6000);
        for w in frames.windows(2).step_by(500) {
            let d = (w[1].position - w[0].position).norm();
            assert!((d - 60.0 / 3.6 * 0.5e-3).abs() < 1e-12);
            assert!((d - 8.335e-3).abs() < 2e-6);
        }
    }

    #[test]
    fn start_outside_lane_is_rejected() {
        let mut s = spec(0.01, 0);
        s.start_xy = [0.0, 8.0];
        assert!(matches!(
            generate_trajectory(&Scene::urban_canyon(), &s),
            Err(Error::StartOutsideLane { .. })
        ));
    }

    #[test]
    fn single_wall_mirror_identity() {
        let mut scene = Scene::urban_canyon();
        scene.walls.truncate(1);
        scene.ground_loss_db = None;
        scene.double_bounce = false;
        let bs = scene.bs.position;
        let rx = Vector3::new(4.0, -5.25, 1.6);
        let rays = trace_rays(&scene, &bs, &rx, true);
        assert_eq!(rays.len(), 2);
        let w = &scene.walls[0];
        let mirrored_rx = rx - 2.0 * (w.normal.dot(&rx) - w.normal.dot(&w.center)) * w.normal;
        let s = rays[1].bounces[0];
        let dod = (s - bs).normalize();
        let line = (mirrored_rx - bs).normalize();
        assert!((dod - line).norm() < 1e-9);
        assert!((rays[1].length - (mirrored_rx - bs).norm()).abs() < 1e-9);
        // Snell: equal angles about the normal
        let din = (s - bs).normalize();
        let dout = (rx - s).normalize();
        let ain = din.dot(&w.normal).abs().acos();
        let aout = dout.dot(&w.normal).abs().acos();
        assert!((ain - aout).abs() < 1e-9);
    }

    #[test]
    fn los_only_without_reflectors() {
        let mut scene = Scene::urban_canyon();
        scene.walls.clear();
        scene.ground_loss_db = None;
        scene.blockage.rate_hz = 0.0;
        let frames = generate_trajectory(&scene, &spec(0.05, 3)).unwrap();
        assert!(frames.iter().all(|f| f.true_paths.len() == 1 && f.true_paths[0].order == PathOrder::Los));
    }

    #[test]
    fn path_lengths_match_toas() {
        let scene = Scene::urban_canyon();
        let frames = generate_trajectory(&scene, &spec(0.2, 4)).unwrap();
        let bs = scene.bs_array();
        for f in frames.iter().step_by(37) {
            let rx = f.rx_array(&scene);
            let rays = trace_rays(&scene, &bs.origin, &rx.origin, !f.los_blocked);
            for p in &f.true_paths {
                let len = (p.toa - f.clock_offset) * SPEED_OF_LIGHT;
                assert!(rays.iter().any(|r| (r.length - len).abs() < 1e-9));
            }
            assert!(f.true_paths.windows(2).all(|w| w[0].toa <= w[1].toa));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let scene = Scene::urban_canyon();
        let a = generate_trajectory(&scene, &spec(0.05, 9)).unwrap();
        let b = generate_trajectory(&scene, &spec(0.05, 9)).unwrap();
        assert_eq!(a, b);
        let c = generate_trajectory(&scene, &spec(0.05, 10)).unwrap();
        assert_ne!(a[0].clock_offset, c[0].clock_offset);
    }

    #[test]
    fn blocked_frames_have_no_los() {
        let mut scene = Scene::urban_canyon();
        scene.blockage = Blockage {
            rate_hz: 50.0,
            mean_duration_s: 0.02,
        };
        let frames = generate_trajectory(&scene, &spec(0.2, 5)).unwrap();
        assert!(frames.iter().any(|f| f.los_blocked));
        for f in &frames {
            let has_los = f.true_paths.iter().any(|p| p.order == PathOrder::Los);
            assert_eq!(has_los, !f.los_blocked);
        }
    }

    #[test]
    fn scene_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        let scene = Scene::urban_canyon();
        scene.save(&path).unwrap();
        assert_eq!(Scene::load(&path).unwrap(), scene);
    }
}
