//! Image-method geometry shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Rotation3, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use momp_track::locate::LocalizationInput;
use momp_track::signal::{angles_from_unit, PathOrder, PathParams, SPEED_OF_LIGHT};

fn unit_path(order: PathOrder, dod: Vector3<f64>, doa: Vector3<f64>) -> PathParams {
    let (dod_az, dod_el) = angles_from_unit(&dod.normalize());
    let (doa_az, doa_el) = angles_from_unit(&doa.normalize());
    PathParams {
        gain: Complex64::new(1.0, 0.0),
        toa: 0.0,
        tdoa: 0.0,
        doa_az,
        doa_el,
        dod_az,
        dod_el,
        order,
    }
}

/// A BS, a receiver, reflecting planes `n·x = d` and array orientations.
pub struct Geometry {
    pub bs: Vector3<f64>,
    pub rx: Vector3<f64>,
    pub rot_bs: Matrix3<f64>,
    pub rot_rx: Matrix3<f64>,
    pub planes: Vec<(Vector3<f64>, f64)>,
    pub offset: f64,
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    Rotation3::from_euler_angles(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0))
        .into_inner()
}

impl Geometry {
    pub fn random(rng: &mut ChaCha8Rng, n_planes: usize) -> Self {
        let bs = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(2.0..15.0));
        let rx = Vector3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(0.5..3.0));
        let offset = rng.random_range(0.0..50e-9);
        let rot_bs = random_rotation(rng);
        let rot_rx = random_rotation(rng);
        let planes: Vec<(Vector3<f64>, f64)> = (0..n_planes)
            .map(|_| {
                let n: Vector3<f64> = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    .normalize();
                // both endpoints on the same side, 1–10 m away from the closer one
                (n, n.dot(&bs).min(n.dot(&rx)) - rng.random_range(1.0f64..10.0))
            })
            .collect();
        Self { bs, rx, rot_bs, rot_rx, planes, offset }
    }

    /// World-frame paths: optional LOS, then one reflection per plane, all
    /// ToAs shifted by the clock offset.
    pub fn paths(&self, los: bool) -> Vec<PathParams> {
        let (bs, rx) = (self.bs, self.rx);
        let mut out = Vec::new();
        if los {
            let mut p = unit_path(PathOrder::Los, rx - bs, bs - rx);
            p.toa = (rx - bs).norm() / SPEED_OF_LIGHT + self.offset;
            out.push(p);
        }
        for (n, d) in &self.planes {
            let image = bs - 2.0 * (n.dot(&bs) - d) * n;
            let dir = rx - image;
            let t = (d - n.dot(&image)) / n.dot(&dir);
            let s = image + t * dir;
            let mut p = unit_path(PathOrder::FirstOrder, s - bs, s - rx);
            p.toa = ((s - bs).norm() + (rx - s).norm()) / SPEED_OF_LIGHT + self.offset;
            out.push(p);
        }
        let t0 = out.iter().map(|p| p.toa).fold(f64::INFINITY, f64::min);
        for p in &mut out {
            p.tdoa = p.toa - t0;
        }
        out
    }

    /// Locator input with the angles expressed in each array's own frame.
    pub fn input(&self, mut paths: Vec<PathParams>) -> LocalizationInput {
        for p in &mut paths {
            (p.dod_az, p.dod_el) = angles_from_unit(&(self.rot_bs.transpose() * p.dod()));
            (p.doa_az, p.doa_el) = angles_from_unit(&(self.rot_rx.transpose() * p.doa()));
        }
        LocalizationInput::new(self.bs, self.rot_bs, self.rot_rx, paths)
    }
}
