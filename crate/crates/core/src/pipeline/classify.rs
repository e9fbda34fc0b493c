//! Path-order labelling from geometric consistency with a position prior.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::estimate::ChannelEstimate;
use crate::locate::{solve_position, LocalizationInput};
use crate::signal::{PathOrder, SPEED_OF_LIGHT};

/// Geometry needed to test each path against a position prior.
#[derive(Debug, Clone)]
pub struct ClassifyContext {
    pub bs_position: Vector3<f64>,
    pub bs_orientation: Matrix3<f64>,
    pub rx_orientation: Matrix3<f64>,
    /// Prior receiver (panel) position, e.g. dead reckoned. Without one,
    /// each path is tested by the consistency of a LOS + path position fix.
    pub rx_prior: Option<Vector3<f64>>,
    /// Maximum geometric residual, meters.
    pub threshold: f64,
    /// Reflections closer than this to the LOS axis are duplicates, rad.
    pub min_bounce_angle: f64,
    /// Largest departure/arrival misalignment accepted for LOS, rad.
    pub los_max_bend: f64,
    /// Paths within this TDoA of the earliest count as "earliest", s.
    pub los_window: f64,
}

/// Shortest leg (BS → bounce, bounce → receiver) of a credible reflection, m.
const MIN_LEG: f64 = 0.5;

/// Distance from `p` to the ray `o + s d`, `s ≥ 0`.
fn ray_distance(o: &Vector3<f64>, d: &Vector3<f64>, p: &Vector3<f64>) -> (f64, f64) {
    let s = (p - o).dot(d).max(0.0);
    ((o + s * d - p).norm(), s)
}

/// Closest approach of rays `o1 + a d1`, `o2 + b d2` with `a, b ≥ 0`;
/// returns (distance, a, b).
fn ray_ray(o1: &Vector3<f64>, d1: &Vector3<f64>, o2: &Vector3<f64>, d2: &Vector3<f64>) -> (f64, f64, f64) {
    let w = o1 - o2;
    let m = Matrix2::new(1.0, -d1.dot(d2), -d1.dot(d2), 1.0);
    let rhs = Vector2::new(-d1.dot(&w), d2.dot(&w));
    let (a, b) = match m.try_inverse() {
        Some(inv) => {
            let x = inv * rhs;
            (x.x, x.y)
        }
        None => (0.0, 0.0),
    };
    if a >= 0.0 && b >= 0.0 {
        return ((o1 + a * d1 - o2 - b * d2).norm(), a, b);
    }
    // one parameter clamps to zero
    let (da, sa) = ray_distance(o2, d2, o1);
    let (db, sb) = ray_distance(o1, d1, o2);
    if da <= db {
        (da, 0.0, sa)
    } else {
        (db, sb, 0.0)
    }
}

/// Labels every path of `est`. Zero-gain paths are `Unknown`.
pub fn classify_paths(est: &ChannelEstimate, ctx: &ClassifyContext) -> Vec<PathOrder> {
    let n = est.paths.len();
    let mut labels = vec![PathOrder::Unknown; n];
    let live: Vec<usize> = (0..n).filter(|&i| est.paths[i].gain.norm() > 0.0).collect();
    if live.is_empty() {
        return labels;
    }
    let phi: Vec<Vector3<f64>> = est
        .paths
        .iter()
        .map(|p| (ctx.bs_orientation * p.dod()).normalize())
        .collect();
    let theta: Vec<Vector3<f64>> = est
        .paths
        .iter()
        .map(|p| (ctx.rx_orientation * p.doa()).normalize())
        .collect();

    // LOS candidate: earliest, then strongest, then lowest index.
    let t_first = live
        .iter()
        .map(|&i| est.paths[i].tdoa)
        .fold(f64::INFINITY, f64::min);
    let cand = live
        .iter()
        .copied()
        .filter(|&i| est.paths[i].tdoa <= t_first + ctx.los_window)
        .max_by(|&a, &b| {
            est.paths[a]
                .gain
                .norm()
                .total_cmp(&est.paths[b].gain.norm())
                .then(b.cmp(&a))
        })
        .expect("nonempty");
    let bend = (-theta[cand]).angle(&phi[cand]);
    let Some(prior) = ctx.rx_prior else {
        if bend <= ctx.los_max_bend {
            labels[cand] = PathOrder::Los;
        }
        label_by_pairs(est, ctx, &live, &mut labels, &phi, &theta, t_first);
        return labels;
    };
    let (d_los, range) = ray_distance(&ctx.bs_position, &phi[cand], &prior);
    let los = (d_los <= ctx.threshold && bend <= ctx.los_max_bend).then_some((cand, range));
    if let Some((i, _)) = los {
        labels[i] = PathOrder::Los;
    }

    for &i in &live {
        if labels[i] == PathOrder::Los {
            continue;
        }
        // Reflections need a real bend between departure and arrival.
        let bend = (-theta[i]).angle(&phi[i]);
        let (dist, a, b) = ray_ray(&ctx.bs_position, &phi[i], &prior, &theta[i]);
        let mut resid = dist;
        let mut later = true;
        if let Some((l, d0)) = los {
            let tau = est.paths[i].tdoa - est.paths[l].tdoa;
            resid = resid.hypot(a + b - (d0 + SPEED_OF_LIGHT * tau));
            // a LOS leak with a bent arrival passes the ray test at the receiver
            later = tau > ctx.los_window;
        }
        // An unbent ray is either a LOS duplicate (same delay) or a
        // direction-preserving multi-bounce such as two parallel walls.
        labels[i] = if bend < ctx.min_bounce_angle {
            if est.paths[i].tdoa <= t_first + ctx.los_window {
                PathOrder::Unknown
            } else {
                PathOrder::HigherOrder
            }
        } else if resid <= ctx.threshold && later && a >= MIN_LEG && b >= MIN_LEG {
            PathOrder::FirstOrder
        } else {
            PathOrder::HigherOrder
        };
    }
    labels
}

/// Prior-free labelling: a path is first order when the LOS + path fix is
/// self-consistent (the pair over-determines the position by one equation).
fn label_by_pairs(
    est: &ChannelEstimate,
    ctx: &ClassifyContext,
    live: &[usize],
    labels: &mut [PathOrder],
    phi: &[Vector3<f64>],
    theta: &[Vector3<f64>],
    t_first: f64,
) {
    let los = labels.iter().position(|l| *l == PathOrder::Los);
    for &i in live {
        if labels[i] == PathOrder::Los {
            continue;
        }
        let bend = (-theta[i]).angle(&phi[i]);
        if bend < ctx.min_bounce_angle {
            labels[i] = if est.paths[i].tdoa <= t_first + ctx.los_window {
                PathOrder::Unknown
            } else {
                PathOrder::HigherOrder
            };
            continue;
        }
        let Some(l) = los else {
            labels[i] = PathOrder::Unknown;
            continue;
        };
        if est.paths[i].tdoa - est.paths[l].tdoa <= ctx.los_window {
            labels[i] = PathOrder::HigherOrder;
            continue;
        }
        let mut pair = vec![est.paths[l].clone(), est.paths[i].clone()];
        pair[0].order = PathOrder::Los;
        pair[1].order = PathOrder::FirstOrder;
        let inp = LocalizationInput::new(ctx.bs_position, ctx.bs_orientation, ctx.rx_orientation, pair);
        labels[i] = match solve_position(&inp) {
            Ok(fix) if fix.residual <= ctx.threshold => PathOrder::FirstOrder,
            _ => PathOrder::HigherOrder,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{frame_paths, Scene};
    use nalgebra::Matrix3;
    use num_complex::Complex64;

    fn ctx(scene: &Scene, rx_pos: Vector3<f64>, rx_rot: Matrix3<f64>) -> ClassifyContext {
        let bs = scene.bs_array();
        ClassifyContext {
            bs_position: bs.origin,
            bs_orientation: bs.orientation,
            rx_orientation: rx_rot,
            rx_prior: Some(rx_pos),
            threshold: 0.3,
            min_bounce_angle: 2f64.to_radians(),
            los_max_bend: 10f64.to_radians(),
            los_window: 0.5e-9,
        }
    }

    #[test]
    fn noiseless_labels_match_ground_truth() {
        let scene = Scene::urban_canyon();
        for x in [-20.0, -9.0, 0.0, 7.0, 18.0] {
            let pos = Vector3::new(x, -5.25, 1.6);
            let heading = Matrix3::identity();
            let (panel, paths) = frame_paths(&scene, &pos, &heading, false, 12e-9);
            let rx = scene.panel_array(panel, &pos, &heading);
            let est = ChannelEstimate::from_paths(0.0, paths.clone());
            let labels = classify_paths(&est, &ctx(&scene, rx.origin, rx.orientation));
            for (p, l) in est.paths.iter().zip(&labels) {
                assert_eq!(p.order, *l, "x={x} tdoa={}", p.tdoa);
            }
        }
    }

    #[test]
    fn prior_free_labels_match_ground_truth() {
        let scene = Scene::urban_canyon();
        for x in [-20.0, -9.0, 0.0, 7.0, 18.0] {
            let pos = Vector3::new(x, -5.25, 1.6);
            let heading = Matrix3::identity();
            let (panel, paths) = frame_paths(&scene, &pos, &heading, false, 12e-9);
            let rx = scene.panel_array(panel, &pos, &heading);
            let est = ChannelEstimate::from_paths(0.0, paths.clone());
            let mut c = ctx(&scene, rx.origin, rx.orientation);
            c.rx_prior = None;
            let labels = classify_paths(&est, &c);
            for (p, l) in est.paths.iter().zip(&labels) {
                assert_eq!(p.order, *l, "x={x} tdoa={}", p.tdoa);
            }
        }
    }

    #[test]
    fn zero_gains_are_unknown() {
        let scene = Scene::urban_canyon();
        let pos = Vector3::new(0.0, -5.25, 1.6);
        let (panel, mut paths) = frame_paths(&scene, &pos, &Matrix3::identity(), false, 0.0);
        for p in &mut paths {
            p.gain = Complex64::new(0.0, 0.0);
        }
        let rx = scene.panel_array(panel, &pos, &Matrix3::identity());
        let est = ChannelEstimate::from_paths(0.0, paths);
        let labels = classify_paths(&est, &ctx(&scene, rx.origin, rx.orientation));
        assert!(labels.iter().all(|l| *l == PathOrder::Unknown));
    }

    #[test]
    fn duplicate_los_gets_one_label() {
        let scene = Scene::urban_canyon();
        let pos = Vector3::new(3.0, -5.25, 1.6);
        let (panel, paths) = frame_paths(&scene, &pos, &Matrix3::identity(), false, 0.0);
        let mut dup = paths[0].clone();
        dup.gain *= 0.5;
        let mut all = paths.clone();
        all.push(dup);
        let rx = scene.panel_array(panel, &pos, &Matrix3::identity());
        let est = ChannelEstimate::from_paths(0.0, all);
        let labels = classify_paths(&est, &ctx(&scene, rx.origin, rx.orientation));
        assert_eq!(labels.iter().filter(|l| **l == PathOrder::Los).count(), 1);
        assert_eq!(labels[0], PathOrder::Los);
    }
}
