//! Constant-velocity Kalman filter on planar position fixes.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KfParams {
    /// White-acceleration spectral density, m²/s³.
    pub process_noise: f64,
    /// Position measurement variance, m².
    pub measurement_noise: f64,
}

impl Default for KfParams {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 0.25,
        }
    }
}

/// State `(x, y, vx, vy)` and its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KfState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
    pub params: KfParams,
}

impl KfState {
    pub fn new(xy: Vector2<f64>, v: Vector2<f64>, params: KfParams) -> Self {
        let mut cov = Matrix4::zeros();
        cov.fixed_view_mut::<2, 2>(0, 0).fill_diagonal(params.measurement_noise);
        cov.fixed_view_mut::<2, 2>(2, 2).fill_diagonal(1.0);
        Self {
            mean: Vector4::new(xy.x, xy.y, v.x, v.y),
            cov,
            params,
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.mean[0], self.mean[1])
    }
}

fn transition(tp: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = tp;
    f[(1, 3)] = tp;
    f
}

fn process_cov(tp: f64, q: f64) -> Matrix4<f64> {
    let (t2, t3) = (tp * tp / 2.0, tp * tp * tp / 3.0);
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        m[(i, i)] = t3 * q;
        m[(i, i + 2)] = t2 * q;
        m[(i + 2, i)] = t2 * q;
        m[(i + 2, i + 2)] = tp * q;
    }
    m
}

/// Predict over `tp` and update with `measured`; returns the new state and
/// its filtered position. Joseph-form covariance update.
pub fn kf_update(kf: &KfState, measured: Vector2<f64>, tp: f64) -> (KfState, Vector2<f64>) {
    let f = transition(tp);
    let mean = f * kf.mean;
    let cov = f * kf.cov * f.transpose() + process_cov(tp, kf.params.process_noise);
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let r = Matrix2::identity() * kf.params.measurement_noise;
    let s = h * cov * h.transpose() + r;
    let Some(s_inv) = s.try_inverse() else {
        let next = KfState { mean, cov, params: kf.params };
        let p = next.position();
        return (next, p);
    };
    let k = cov * h.transpose() * s_inv;
    let mean = mean + k * (measured - h * mean);
    let ikh = Matrix4::identity() - k * h;
    let cov = ikh * cov * ikh.transpose() + k * r * k.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    let next = KfState { mean, cov, params: kf.params };
    let p = next.position();
    (next, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_straight_line_is_reproduced() {
        let params = KfParams {
            process_noise: 0.0,
            measurement_noise: 0.0,
        };
        let v = Vector2::new(16.67, 0.0);
        let mut kf = KfState::new(Vector2::zeros(), v, params);
        for n in 1..50 {
            let z = v * (n as f64 * 0.5e-3);
            let (next, out) = kf_update(&kf, z, 0.5e-3);
            assert!((out - z).norm() < 1e-12);
            kf = next;
        }
    }

    #[test]
    fn huge_measurement_noise_follows_prediction() {
        let params = KfParams {
            process_noise: 0.0,
            measurement_noise: 1e12,
        };
        let kf = KfState {
            cov: Matrix4::identity() * 1e-6,
            ..KfState::new(Vector2::new(1.0, 2.0), Vector2::new(10.0, 0.0), params)
        };
        let (_, out) = kf_update(&kf, Vector2::new(500.0, -500.0), 0.1);
        assert!((out - Vector2::new(2.0, 2.0)).norm() < 1e-6);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut kf = KfState::new(Vector2::zeros(), Vector2::zeros(), KfParams::default());
        for n in 0..200 {
            kf = kf_update(&kf, Vector2::new(n as f64 * 0.01, 0.0), 0.5e-3).0;
            assert!((kf.cov - kf.cov.transpose()).norm() < 1e-12);
            assert!(kf.cov.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
        }
    }

    #[test]
    fn filtering_beats_raw_fixes_on_a_noisy_track() {
        let tp = 0.5e-3;
        let v = Vector2::new(60.0 / 3.6, 0.0);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut kf = KfState::new(Vector2::zeros(), v, KfParams::default());
        let (mut raw, mut filt) = (Vec::new(), Vec::new());
        for n in 1..=2000 {
            let truth = v * (n as f64 * tp);
            let z = truth + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
            let (next, out) = kf_update(&kf, z, tp);
            kf = next;
            raw.push((z - truth).norm());
            filt.push((out - truth).norm());
        }
        raw.sort_by(f64::total_cmp);
        filt.sort_by(f64::total_cmp);
        assert!(filt[1000] < raw[1000], "{} vs {}", filt[1000], raw[1000]);
    }
}
