//! Position from single-bounce path geometry.
//!
//! With `φ` the world-frame departure direction, `θ` the world-frame arrival
//! direction (pointing from the receiver back toward the last interaction)
//! and `d₀` the length of the reference path, every path is linear in the
//! unknowns `(p, d₀, a_ℓ)`:
//!
//! ```text
//! LOS:          p − d₀ φ₀                 = p_BS
//! first order:  p + d₀ θ_ℓ − a_ℓ (φ_ℓ + θ_ℓ) = p_BS − c τ_ℓ θ_ℓ
//! ```
//!
//! where `a_ℓ` is the BS-to-reflector distance and `τ_ℓ` the TDoA against
//! the reference path. The linear least-squares solution seeds a
//! Levenberg–Marquardt refinement that keeps `d₀` and `a_ℓ` nonnegative by
//! optimizing their square roots.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::signal::{PathOrder, PathParams, SPEED_OF_LIGHT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalizationMode {
    LosGeometric,
    NlosGeometric,
    DeadReckoning,
}

#[derive(Debug, Clone)]
pub struct LocalizationInput {
    pub bs_position: Vector3<f64>,
    /// Local-to-world rotation of the BS array.
    pub bs_orientation: Matrix3<f64>,
    /// Local-to-world rotation of the receiving array.
    pub rx_orientation: Matrix3<f64>,
    pub paths: Vec<PathParams>,
    pub c: f64,
}

impl LocalizationInput {
    pub fn new(
        bs_position: Vector3<f64>,
        bs_orientation: Matrix3<f64>,
        rx_orientation: Matrix3<f64>,
        paths: Vec<PathParams>,
    ) -> Self {
        Self {
            bs_position,
            bs_orientation,
            rx_orientation,
            paths,
            c: SPEED_OF_LIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub xyz: [f64; 3],
    pub xy: [f64; 2],
    pub mode: LocalizationMode,
    /// Norm of the geometric residual, meters. Zero for dead reckoning.
    pub residual: f64,
    /// False when the refinement hit the iteration cap.
    pub converged: bool,
}

impl PositionEstimate {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.xyz)
    }

    pub fn planar(&self) -> Vector2<f64> {
        Vector2::from(self.xy)
    }
}

/// Whether the labeled paths determine a position, and in which mode.
pub fn localizable(paths: &[PathParams]) -> Option<LocalizationMode> {
    let los = paths.iter().any(|p| p.order == PathOrder::Los);
    let first = paths.iter().filter(|p| p.order == PathOrder::FirstOrder).count();
    match (los, first) {
        (true, n) if n >= 1 => Some(LocalizationMode::LosGeometric),
        (false, n) if n >= 3 => Some(LocalizationMode::NlosGeometric),
        _ => None,
    }
}

/// `prev + tp · v`, component by component.
pub fn dead_reckon(prev: Vector2<f64>, speed: Vector2<f64>, tp: f64) -> Vector2<f64> {
    Vector2::new(prev.x + tp * speed.x, prev.y + tp * speed.y)
}

pub fn dead_reckoned_estimate(prev: Vector2<f64>, speed: Vector2<f64>, tp: f64, z: f64) -> PositionEstimate {
    let xy = dead_reckon(prev, speed, tp);
    PositionEstimate {
        xyz: [xy.x, xy.y, z],
        xy: [xy.x, xy.y],
        mode: LocalizationMode::DeadReckoning,
        residual: 0.0,
        converged: true,
    }
}

const MAX_ITERATIONS: usize = 100;
const STEP_TOL: f64 = 1e-10;

/// Linear system `A u = b` over `u = [p, d₀, a_1 … a_L]`.
struct System {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

fn build_system(inp: &LocalizationInput, mode: LocalizationMode) -> System {
    let world = |r: &Matrix3<f64>, v: Vector3<f64>| (r * v).normalize();
    let los = inp.paths.iter().find(|p| p.order == PathOrder::Los);
    let firsts: Vec<&PathParams> = inp
        .paths
        .iter()
        .filter(|p| p.order == PathOrder::FirstOrder)
        .collect();
    let tau_ref = match (mode, los) {
        (LocalizationMode::LosGeometric, Some(l)) => l.tdoa,
        _ => firsts.iter().map(|p| p.tdoa).fold(f64::INFINITY, f64::min),
    };
    let with_los = mode == LocalizationMode::LosGeometric;
    let rows = 3 * (firsts.len() + usize::from(with_los));
    let cols = 4 + firsts.len();
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let mut r0 = 0;
    if let (true, Some(l)) = (with_los, los) {
        let phi = world(&inp.bs_orientation, l.dod());
        for i in 0..3 {
            a[(i, i)] = 1.0;
            a[(i, 3)] = -phi[i];
            b[i] = inp.bs_position[i];
        }
        r0 = 3;
    }
    for (k, p) in firsts.iter().enumerate() {
        let phi = world(&inp.bs_orientation, p.dod());
        let theta = world(&inp.rx_orientation, p.doa());
        let ctau = inp.c * (p.tdoa - tau_ref);
        for i in 0..3 {
            let r = r0 + 3 * k + i;
            a[(r, i)] = 1.0;
            a[(r, 3)] = theta[i];
            a[(r, 4 + k)] = -(phi[i] + theta[i]);
            b[r] = inp.bs_position[i] - ctau * theta[i];
        }
    }
    System { a, b }
}

/// Maps the optimization variables `[p, √d₀, √a_ℓ]` to `u`.
fn lift(x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| if i < 3 { x[i] } else { x[i] * x[i] })
}

fn residual(sys: &System, x: &DVector<f64>) -> DVector<f64> {
    &sys.a * lift(x) - &sys.b
}

fn jacobian(sys: &System, x: &DVector<f64>) -> DMatrix<f64> {
    let mut j = sys.a.clone();
    for k in 3..x.len() {
        j.column_mut(k).scale_mut(2.0 * x[k]);
    }
    j
}

/// Levenberg–Marquardt on `‖A·lift(x) − b‖²`. Returns the iterate and
/// whether the step tolerance was met.
fn levenberg_marquardt(sys: &System, mut x: DVector<f64>) -> (DVector<f64>, bool) {
    let mut lambda = 1e-3;
    let mut cost = residual(sys, &x).norm_squared();
    for _ in 0..MAX_ITERATIONS {
        let r = residual(sys, &x);
        let j = jacobian(sys, &x);
        let jt = j.transpose();
        let g = &jt * &r;
        let h = &jt * &j;
        loop {
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    return (x, false);
                }
                continue;
            };
            let trial = &x + &step;
            let trial_cost = residual(sys, &trial).norm_squared();
            if trial_cost <= cost {
                x = trial;
                let small = step.norm() <= STEP_TOL * (1.0 + x.norm());
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if small {
                    return (x, true);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // no descent direction left at this precision
                return (x, true);
            }
        }
    }
    (x, false)
}

/// Solves the single-bounce geometry for the receiver position.
pub fn solve_position(inp: &LocalizationInput) -> Result<PositionEstimate> {
    let mode = localizable(&inp.paths).ok_or(Error::NotLocalizable)?;
    let sys = build_system(inp, mode);
    let u0 = sys
        .a
        .clone()
        .svd(true, true)
        .solve(&sys.b, 1e-12)
        .map_err(|e| Error::Config(e.to_string()))?;
    // Nonnegative ranges; a zero start would freeze the square root at zero.
    let x0 = DVector::from_fn(u0.len(), |i, _| {
        if i < 3 {
            u0[i]
        } else {
            u0[i].max(1e-3).sqrt()
        }
    });
    let (x, converged) = levenberg_marquardt(&sys, x0);
    let res = residual(&sys, &x).norm();
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NoConvergence {
            iterations: MAX_ITERATIONS,
        });
    }
    Ok(PositionEstimate {
        xyz: [x[0], x[1], x[2]],
        xy: [x[0], x[1]],
        mode,
        residual: res,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::angles_from_unit;
    use num_complex::Complex64;

    fn path(order: PathOrder, dod: Vector3<f64>, doa: Vector3<f64>, tdoa: f64) -> PathParams {
        let (dod_az, dod_el) = angles_from_unit(&dod.normalize());
        let (doa_az, doa_el) = angles_from_unit(&doa.normalize());
        PathParams {
            gain: Complex64::new(1.0, 0.0),
            toa: tdoa,
            tdoa,
            doa_az,
            doa_el,
            dod_az,
            dod_el,
            order,
        }
    }

    /// Forward geometry: LOS plus reflections off planes `n·x = d`, all in
    /// the world frame with identity array rotations.
    fn forward(bs: Vector3<f64>, rx: Vector3<f64>, planes: &[(Vector3<f64>, f64)], los: bool) -> Vec<PathParams> {
        let d0 = (rx - bs).norm();
        let mut lens = Vec::new();
        let mut out = Vec::new();
        if los {
            out.push(path(PathOrder::Los, rx - bs, bs - rx, 0.0));
            lens.push(d0);
        }
        for (n, d) in planes {
            let n = n.normalize();
            let image = bs - 2.0 * (n.dot(&bs) - d) * n;
            let dir = rx - image;
            let t = (d - n.dot(&image)) / n.dot(&dir);
            let s = image + t * dir;
            let len = (s - bs).norm() + (rx - s).norm();
            out.push(path(PathOrder::FirstOrder, s - bs, s - rx, 0.0));
            lens.push(len);
        }
        let min = lens.iter().cloned().fold(f64::INFINITY, f64::min);
        for (p, l) in out.iter_mut().zip(&lens) {
            p.tdoa = (l - min) / SPEED_OF_LIGHT;
            p.toa = p.tdoa;
        }
        out
    }

    fn input(bs: Vector3<f64>, paths: Vec<PathParams>) -> LocalizationInput {
        LocalizationInput::new(bs, Matrix3::identity(), Matrix3::identity(), paths)
    }

    #[test]
    fn rule_examples() {
        let l = path(PathOrder::Los, Vector3::x(), -Vector3::x(), 0.0);
        let f = path(PathOrder::FirstOrder, Vector3::y(), Vector3::y(), 1e-9);
        assert_eq!(localizable(&[l.clone(), f.clone()]), Some(LocalizationMode::LosGeometric));
        assert_eq!(localizable(&[f.clone(), f.clone()]), None);
        assert_eq!(localizable(&[f.clone(), f.clone(), f]), Some(LocalizationMode::NlosGeometric));
        assert_eq!(localizable(&[]), None);
        assert!(matches!(solve_position(&input(Vector3::zeros(), vec![l])), Err(Error::NotLocalizable)));
    }

    #[test]
    fn inverts_los_plus_one_wall() {
        let bs = Vector3::new(0.0, 8.5, 6.0);
        let rx = Vector3::new(12.0, -5.25, 1.6);
        let paths = forward(bs, rx, &[(Vector3::y(), -9.0)], true);
        let est = solve_position(&input(bs, paths)).unwrap();
        assert!((est.position() - rx).norm() <= 1e-6, "{:?}", est);
        assert_eq!(est.mode, LocalizationMode::LosGeometric);
        assert_eq!(est.xy, [est.xyz[0], est.xyz[1]]);
    }

    #[test]
    fn inverts_three_reflections_without_los() {
        let bs = Vector3::new(0.0, 8.5, 6.0);
        let rx = Vector3::new(-7.0, -5.25, 1.6);
        let planes = [
            (Vector3::y(), -9.0),
            (Vector3::z(), 0.0),
            (Vector3::x(), -30.0),
        ];
        let paths = forward(bs, rx, &planes, false);
        let est = solve_position(&input(bs, paths)).unwrap();
        assert!((est.position() - rx).norm() <= 1e-6, "{:?}", est);
        assert_eq!(est.mode, LocalizationMode::NlosGeometric);
    }

    #[test]
    fn translation_equivariance() {
        let bs = Vector3::new(0.0, 8.5, 6.0);
        let rx = Vector3::new(3.0, -5.25, 1.6);
        let shift = Vector3::new(100.0, -40.0, 2.0);
        let plane = (Vector3::y(), -9.0);
        let a = solve_position(&input(bs, forward(bs, rx, &[plane], true))).unwrap();
        let moved = (plane.0, plane.1 + plane.0.dot(&shift));
        let b = solve_position(&input(bs + shift, forward(bs + shift, rx + shift, &[moved], true))).unwrap();
        assert!((b.position() - a.position() - shift).norm() <= 1e-6);
    }

    #[test]
    fn rotated_arrays_use_local_angles() {
        let bs = Vector3::new(0.0, 8.5, 6.0);
        let rx = Vector3::new(5.0, -5.25, 1.6);
        let rot_bs = nalgebra::Rotation3::from_euler_angles(0.3, -0.2, 1.0).into_inner();
        let rot_rx = nalgebra::Rotation3::from_euler_angles(0.0, 0.4, -0.7).into_inner();
        let mut paths = forward(bs, rx, &[(Vector3::y(), -9.0), (Vector3::z(), 0.0)], true);
        for p in &mut paths {
            (p.dod_az, p.dod_el) = angles_from_unit(&(rot_bs.transpose() * p.dod()));
            (p.doa_az, p.doa_el) = angles_from_unit(&(rot_rx.transpose() * p.doa()));
        }
        let est = solve_position(&LocalizationInput::new(bs, rot_bs, rot_rx, paths)).unwrap();
        assert!((est.position() - rx).norm() <= 1e-6);
    }

    #[test]
    fn dead_reckoning_examples() {
        let z = Vector2::zeros();
        assert_eq!(dead_reckon(Vector2::new(3.0, 4.0), z, 0.5e-3), Vector2::new(3.0, 4.0));
        let v = dead_reckon(z, Vector2::new(16.67, 0.0), 0.5e-3);
        assert!((v.x - 0.008335).abs() < 1e-15 && v.y == 0.0);
        assert_eq!(dead_reckon(Vector2::new(10.0, 2.0), Vector2::new(-1.0, 1.0), 1.0), Vector2::new(9.0, 3.0));
    }
}
