//! Uniform rectangular arrays and their responses.
//!
//! Elements are indexed `ix * ny + iy`, so the full response is the
//! Kronecker product of the x-axis factor and the y-axis factor. Angles
//! passed to [`steering_vector`] are in the array's local frame, where the
//! array lies in the local x-y plane and local z is its boresight.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A planar array with `nx * ny` elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub nx: usize,
    pub ny: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Columns are the local x, y, z axes expressed in world coordinates.
    pub orientation: Matrix3<f64>,
    /// Phase center in world coordinates, meters.
    pub origin: Vector3<f64>,
}

impl ArrayGeometry {
    /// Half-wavelength array at the world origin with identity orientation.
    pub fn new(nx: usize, ny: usize) -> Self {
        assert!(nx >= 1 && ny >= 1, "array needs at least one element per axis");
        Self {
            nx,
            ny,
            spacing: 0.5,
            orientation: Matrix3::identity(),
            origin: Vector3::zeros(),
        }
    }

    pub fn with_pose(mut self, orientation: Matrix3<f64>, origin: Vector3<f64>) -> Self {
        self.orientation = orientation;
        self.origin = origin;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Orthonormality check on the orientation, `‖RᵀR − I‖_max ≤ 1e-12`.
    pub fn is_orthonormal(&self) -> bool {
        let err = self.orientation.transpose() * self.orientation - Matrix3::identity();
        err.amax() <= 1e-12
    }

    pub fn to_local(&self, world_dir: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.transpose() * world_dir
    }

    pub fn to_world(&self, local_dir: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * local_dir
    }

    /// Local (az, el) of a world-frame direction.
    pub fn local_angles(&self, world_dir: &Vector3<f64>) -> (f64, f64) {
        angles_from_unit(&self.to_local(world_dir))
    }

    /// World-frame unit vector of local (az, el).
    pub fn world_direction(&self, az: f64, el: f64) -> Vector3<f64> {
        self.to_world(&unit_vector(az, el))
    }

    /// Whether a world-frame direction lies in front of the array (local z ≥ 0).
    pub fn faces(&self, world_dir: &Vector3<f64>) -> bool {
        self.to_local(world_dir).z >= 0.0
    }
}

/// `[cos el cos az, cos el sin az, sin el]`.
pub fn unit_vector(az: f64, el: f64) -> Vector3<f64> {
    Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
}

/// Inverse of [`unit_vector`]; az in `[-π, π)`, el in `[-π/2, π/2]`.
pub fn angles_from_unit(v: &Vector3<f64>) -> (f64, f64) {
    let n = v.norm();
    let z = (v.z / n).clamp(-1.0, 1.0);
    let mut az = v.y.atan2(v.x);
    if az >= PI {
        az -= 2.0 * PI;
    }
    (az, z.asin())
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// One-axis response `exp(j 2π spacing i u)` for direction cosine `u`.
pub fn axis_factor(n: usize, spacing: f64, cosine: f64) -> Vec<Complex64> {
    (0..n)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * spacing * i as f64 * cosine))
        .collect()
}

/// Full array response `a(az, el) = a_x ⊗ a_y` for local angles.
pub fn steering_vector(geom: &ArrayGeometry, az: f64, el: f64) -> Vec<Complex64> {
    let u = unit_vector(az, el);
    let ax = axis_factor(geom.nx, geom.spacing, u.x);
    let ay = axis_factor(geom.ny, geom.spacing, u.y);
    kron(&ax, &ay)
}

pub fn kron(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

/// Direction cosines along the array x and y axes, as cone angles in `[0, π]`.
///
/// Dictionaries are gridded over these angles because each one fixes a
/// single Kronecker factor of the array response.
pub fn cone_angles(az: f64, el: f64) -> (f64, f64) {
    let u = unit_vector(az, el);
    (u.x.clamp(-1.0, 1.0).acos(), u.y.clamp(-1.0, 1.0).acos())
}

/// Local (az, el) from a pair of cone angles, taking the front hemisphere.
/// Pairs outside the visible region are pulled onto the horizon.
pub fn angles_from_cones(psi_x: f64, psi_y: f64) -> (f64, f64) {
    let ux = psi_x.cos();
    let uy = psi_y.cos();
    let rho2 = ux * ux + uy * uy;
    let v = if rho2 > 1.0 {
        let r = rho2.sqrt();
        Vector3::new(ux / r, uy / r, 0.0)
    } else {
        Vector3::new(ux, uy, (1.0 - rho2).sqrt())
    };
    angles_from_unit(&v)
}
