use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::array::{steering_vector, ArrayGeometry};
use super::waveform::{raised_cosine, WaveformConfig};
use crate::{Error, Result};

/// Interaction order of a propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathOrder {
    #[serde(rename = "LOS")]
    Los,
    FirstOrder,
    HigherOrder,
    Unknown,
}

/// One propagation path. Angles are in the local frames of the receive
/// (DoA) and transmit (DoD) arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    /// Observed time of arrival, seconds.
    pub toa: f64,
    /// `toa` minus the earliest ToA of the same channel.
    pub tdoa: f64,
    pub doa_az: f64,
    pub doa_el: f64,
    pub dod_az: f64,
    pub dod_el: f64,
    pub order: PathOrder,
}

impl PathParams {
    pub fn doa(&self) -> nalgebra::Vector3<f64> {
        super::unit_vector(self.doa_az, self.doa_el)
    }

    pub fn dod(&self) -> nalgebra::Vector3<f64> {
        super::unit_vector(self.dod_az, self.dod_el)
    }
}

/// Channel taps `H_0 … H_{N_d − 1}`, each `N_r × N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub taps: Vec<DMatrix<Complex64>>,
}

impl ChannelTensor {
    pub fn zeros(nr: usize, nt: usize, nd: usize) -> Self {
        Self {
            taps: vec![DMatrix::zeros(nr, nt); nd],
        }
    }

    pub fn nr(&self) -> usize {
        self.taps.first().map_or(0, |h| h.nrows())
    }

    pub fn nt(&self) -> usize {
        self.taps.first().map_or(0, |h| h.ncols())
    }

    pub fn nd(&self) -> usize {
        self.taps.len()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_squared()).sum()
    }
}

impl std::ops::Add for &ChannelTensor {
    type Output = ChannelTensor;

    fn add(self, rhs: &ChannelTensor) -> ChannelTensor {
        ChannelTensor {
            taps: self.taps.iter().zip(&rhs.taps).map(|(a, b)| a + b).collect(),
        }
    }
}

/// Checks that a path's in-window delay lies in `[0, (N_d − 1 − guard) T_s]`.
pub fn check_in_window(path: &PathParams, cfg: &WaveformConfig) -> Result<()> {
    let delay = path.toa - cfg.t_off;
    let limit = cfg.max_delay();
    if !(0.0..=limit).contains(&delay) || !delay.is_finite() {
        return Err(Error::PathOutOfWindow { delay, limit });
    }
    Ok(())
}

/// `H_d = Σ_ℓ α_ℓ f_p(d T_s − (t_ℓ − t_off)) a_r(θ_ℓ) a_t(φ_ℓ)*`.
pub fn channel_taps(
    paths: &[PathParams],
    cfg: &WaveformConfig,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
) -> Result<ChannelTensor> {
    let mut h = ChannelTensor::zeros(rx.len(), tx.len(), cfg.nd);
    for p in paths {
        check_in_window(p, cfg)?;
        let ar = nalgebra::DVector::from_vec(steering_vector(rx, p.doa_az, p.doa_el));
        let at = nalgebra::DVector::from_vec(steering_vector(tx, p.dod_az, p.dod_el));
        let outer = &ar * at.adjoint() * p.gain;
        let delay = p.toa - cfg.t_off;
        for (d, tap) in h.taps.iter_mut().enumerate() {
            let w = raised_cosine(d as f64 * cfg.ts - delay, cfg);
            if w != 0.0 {
                *tap += &outer * Complex64::new(w, 0.0);
            }
        }
    }
    Ok(h)
}
