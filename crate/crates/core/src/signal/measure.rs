//! Hybrid-beamformed training measurements and noise whitening.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::array::{steering_vector, ArrayGeometry};
use super::channel::{check_in_window, ChannelTensor, PathParams};
use super::waveform::{delay_response, WaveformConfig};
use crate::{Error, Result};

/// Training precoders, combiners and pilots for `M` measurements.
///
/// Each measurement sends a single stream, so `F_m` is one `N_t` column.
/// Combiners may have several RF-chain columns; `W_m* W_m = L_m L_m*`.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    pub precoders: Vec<DVector<Complex64>>,
    pub combiners: Vec<DMatrix<Complex64>>,
    /// Pilot sequences `s_m[q]`, length `Q`.
    pub pilots: Vec<Vec<f64>>,
    pub whiteners: Vec<DMatrix<Complex64>>,
    /// `W̆_m = W_m L_m^{-*}`.
    pub whitened: Vec<DMatrix<Complex64>>,
}

impl BeamformerSet {
    pub fn new(
        precoders: Vec<DVector<Complex64>>,
        combiners: Vec<DMatrix<Complex64>>,
        pilots: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = precoders.len();
        if combiners.len() != m || pilots.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} precoders, {} combiners, {} pilots",
                combiners.len(),
                pilots.len()
            )));
        }
        if m == 0 {
            return Err(Error::EmptyBatch);
        }
        let (nt, nr, q) = (precoders[0].len(), combiners[0].nrows(), pilots[0].len());
        let mut whiteners = Vec::with_capacity(m);
        let mut whitened = Vec::with_capacity(m);
        for (i, w) in combiners.iter().enumerate() {
            if precoders[i].len() != nt || w.nrows() != nr || pilots[i].len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "measurement {i} disagrees with measurement 0 in array or pilot size"
                )));
            }
            let gram = w.adjoint() * w;
            let chol = gram.cholesky().ok_or(Error::SingularCombiner(i))?;
            let l = chol.l();
            // W̆* = L⁻¹ W*
            let wh = l
                .solve_lower_triangular(&w.adjoint())
                .ok_or(Error::SingularCombiner(i))?;
            whitened.push(wh.adjoint());
            whiteners.push(l);
        }
        Ok(Self {
            precoders,
            combiners,
            pilots,
            whiteners,
            whitened,
        })
    }

    pub fn len(&self) -> usize {
        self.precoders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precoders.is_empty()
    }

    pub fn nt(&self) -> usize {
        self.precoders[0].len()
    }

    pub fn nr(&self) -> usize {
        self.combiners[0].nrows()
    }

    /// RF-chain columns per combiner.
    pub fn n_rf(&self) -> usize {
        self.combiners[0].ncols()
    }

    pub fn q(&self) -> usize {
        self.pilots[0].len()
    }

    /// Shifted pilot matrix `[S]_{d,q} = s[q − d]`, zero for `q < d`.
    pub fn pilot_matrix(&self, m: usize, nd: usize) -> DMatrix<f64> {
        let s = &self.pilots[m];
        DMatrix::from_fn(nd, s.len(), |d, q| if q >= d { s[q - d] } else { 0.0 })
    }
}

/// Linear convolution of a delay response with a zero-padded pilot:
/// `g[q] = Σ_d p[d] s[q − d]`.
pub fn pilot_convolve(pilot: &[f64], p: &[f64]) -> Vec<f64> {
    (0..pilot.len())
        .map(|q| {
            let top = q.min(p.len().saturating_sub(1));
            (0..=top).map(|d| p[d] * pilot[q - d]).sum()
        })
        .collect()
}

/// Whitened observations `Y̆_m` (`n_rf × Q`) with the beamformers that made them.
#[derive(Debug, Clone)]
pub struct MeasurementBatch {
    pub y: Vec<DMatrix<Complex64>>,
    pub beams: BeamformerSet,
    pub cfg: WaveformConfig,
}

impl MeasurementBatch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Total number of complex samples.
    pub fn sample_count(&self) -> usize {
        self.y.iter().map(|y| y.len()).sum()
    }

    pub fn stacked(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.sample_count(),
            self.y.iter().flat_map(|y| y.iter().copied()),
        )
    }
}

/// `L_m⁻¹ W_m* n` with `n ~ CN(0, σ² I)` drawn element by element.
fn whitened_noise(
    beams: &BeamformerSet,
    m: usize,
    q: usize,
    sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> DMatrix<Complex64> {
    let nr = beams.nr();
    if sigma2 == 0.0 {
        return DMatrix::zeros(beams.n_rf(), q);
    }
    let s = (sigma2 / 2.0).sqrt();
    let n = DMatrix::from_fn(nr, q, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(s * re, s * im)
    });
    let wn = beams.combiners[m].adjoint() * n;
    beams.whiteners[m]
        .solve_lower_triangular(&wn)
        .expect("whitener is nonsingular")
}

/// `Y̆_m = √P_t W̆_m* [H_0 … H_{N_d−1}] ((I ⊗ F_m) S_m) + N̆_m`.
pub fn measure(
    h: &ChannelTensor,
    beams: &BeamformerSet,
    cfg: &WaveformConfig,
    rng_seed: u64,
) -> Result<MeasurementBatch> {
    if h.nd() != cfg.nd || h.nt() != beams.nt() || h.nr() != beams.nr() || beams.q() != cfg.q {
        return Err(Error::DimensionMismatch(format!(
            "channel {}x{}x{}, beams nr={} nt={} q={}, cfg nd={} q={}",
            h.nr(),
            h.nt(),
            h.nd(),
            beams.nr(),
            beams.nt(),
            beams.q(),
            cfg.nd,
            cfg.q
        )));
    }
    let amp = Complex64::new(cfg.pt_watts().sqrt(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut y = Vec::with_capacity(beams.len());
    for m in 0..beams.len() {
        let f = &beams.precoders[m];
        let s = &beams.pilots[m];
        // column d is H_d f_m
        let hf = DMatrix::from_columns(&h.taps.iter().map(|hd| hd * f).collect::<Vec<_>>());
        let x = DMatrix::from_fn(h.nr(), cfg.q, |r, q| {
            let mut acc = Complex64::new(0.0, 0.0);
            for d in 0..=q.min(cfg.nd - 1) {
                acc += hf[(r, d)] * s[q - d];
            }
            acc
        });
        let signal = beams.whitened[m].adjoint() * x * amp;
        y.push(signal + whitened_noise(beams, m, cfg.q, cfg.noise_psd, &mut rng));
    }
    Ok(MeasurementBatch {
        y,
        beams: beams.clone(),
        cfg: cfg.clone(),
    })
}

/// Same observation as [`measure`] on the taps synthesized from `paths`,
/// computed per path without forming the channel tensor. Uses the same
/// noise draws for a given seed.
pub fn measure_paths(
    paths: &[PathParams],
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    beams: &BeamformerSet,
    cfg: &WaveformConfig,
    rng_seed: u64,
) -> Result<MeasurementBatch> {
    if tx.len() != beams.nt() || rx.len() != beams.nr() || beams.q() != cfg.q {
        return Err(Error::DimensionMismatch(format!(
            "arrays nt={} nr={}, beams nt={} nr={} q={}, cfg q={}",
            tx.len(),
            rx.len(),
            beams.nt(),
            beams.nr(),
            beams.q(),
            cfg.q
        )));
    }
    for p in paths {
        check_in_window(p, cfg)?;
    }
    let amp = cfg.pt_watts().sqrt();
    let responses: Vec<_> = paths
        .iter()
        .map(|p| {
            (
                DVector::from_vec(steering_vector(rx, p.doa_az, p.doa_el)),
                DVector::from_vec(steering_vector(tx, p.dod_az, p.dod_el)),
                delay_response(p.toa - cfg.t_off, cfg),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut y = Vec::with_capacity(beams.len());
    for m in 0..beams.len() {
        let mut ym = DMatrix::<Complex64>::zeros(beams.n_rf(), cfg.q);
        for (p, (ar, at, pd)) in paths.iter().zip(&responses) {
            let tx_gain = at.dotc(&beams.precoders[m]);
            let rx_resp = beams.whitened[m].adjoint() * ar;
            let g = pilot_convolve(&beams.pilots[m], pd);
            let scale = p.gain * tx_gain * amp;
            for q in 0..cfg.q {
                let gq = scale * g[q];
                for c in 0..ym.nrows() {
                    ym[(c, q)] += rx_resp[c] * gq;
                }
            }
        }
        y.push(ym + whitened_noise(beams, m, cfg.q, cfg.noise_psd, &mut rng));
    }
    Ok(MeasurementBatch {
        y,
        beams: beams.clone(),
        cfg: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{beams, channel_taps, PathOrder};

    fn cfg_small() -> WaveformConfig {
        WaveformConfig {
            nd: 16,
            q: 16,
            noise_psd: 0.0,
            pt_dbm: 30.0,
            ..WaveformConfig::default()
        }
    }

    fn some_paths(cfg: &WaveformConfig) -> Vec<PathParams> {
        vec![
            PathParams {
                gain: Complex64::new(0.8, 0.3),
                toa: 2.4 * cfg.ts,
                tdoa: 0.0,
                doa_az: 0.3,
                doa_el: 0.9,
                dod_az: -1.2,
                dod_el: 0.6,
                order: PathOrder::Los,
            },
            PathParams {
                gain: Complex64::new(-0.2, 0.1),
                toa: 7.0 * cfg.ts,
                tdoa: 4.6 * cfg.ts,
                doa_az: 2.0,
                doa_el: 0.4,
                dod_az: 0.5,
                dod_el: 1.0,
                order: PathOrder::FirstOrder,
            },
        ]
    }

    #[test]
    fn zero_channel_without_noise_is_zero() {
        let cfg = cfg_small();
        let tx = ArrayGeometry::new(2, 2);
        let rx = ArrayGeometry::new(2, 1);
        let b = beams::random_beams(&tx, &rx, 4, 2, &beams::hadamard_row(16, 3), 1);
        let h = ChannelTensor::zeros(rx.len(), tx.len(), cfg.nd);
        let batch = measure(&h, &b, &cfg, 7).unwrap();
        assert!(batch.y.iter().all(|y| y.camax() == 0.0));
    }

    #[test]
    fn orthonormal_combiner_has_identity_whitener() {
        let w = DMatrix::<Complex64>::identity(3, 2);
        let f = DVector::from_element(2, Complex64::new(0.5f64.sqrt(), 0.0));
        let b = BeamformerSet::new(vec![f], vec![w.clone()], vec![vec![1.0; 4]]).unwrap();
        assert!((&b.whiteners[0] - DMatrix::identity(2, 2)).camax() < 1e-14);
        assert!((&b.whitened[0] - w).camax() < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs_gram() {
        let tx = ArrayGeometry::new(2, 2);
        let rx = ArrayGeometry::new(3, 3);
        let b = beams::random_beams(&tx, &rx, 5, 4, &beams::hadamard_row(8, 1), 3);
        for (w, l) in b.combiners.iter().zip(&b.whiteners) {
            let gram = w.adjoint() * w;
            let rec = l * l.adjoint();
            assert!((&gram - rec).norm() <= 1e-10 * gram.norm());
            for i in 0..l.nrows() {
                assert!(l[(i, i)].im.abs() < 1e-12 && l[(i, i)].re > 0.0);
                for j in i + 1..l.ncols() {
                    assert_eq!(l[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn path_domain_matches_tensor_route() {
        let mut cfg = cfg_small();
        cfg.noise_psd = 1e-3;
        let tx = ArrayGeometry::new(3, 2);
        let rx = ArrayGeometry::new(2, 2);
        let b = beams::random_beams(&tx, &rx, 3, 2, &beams::hadamard_row(16, 5), 11);
        let paths = some_paths(&cfg);
        let h = channel_taps(&paths, &cfg, &tx, &rx).unwrap();
        let a = measure(&h, &b, &cfg, 99).unwrap();
        let c = measure_paths(&paths, &tx, &rx, &b, &cfg, 99).unwrap();
        for (ya, yc) in a.y.iter().zip(&c.y) {
            assert!((ya - yc).camax() < 1e-10 * ya.camax().max(1.0));
        }
    }

    #[test]
    fn linear_in_the_channel_with_matched_noise() {
        let mut cfg = cfg_small();
        cfg.noise_psd = 0.5;
        let tx = ArrayGeometry::new(2, 2);
        let rx = ArrayGeometry::new(2, 1);
        let b = beams::random_beams(&tx, &rx, 3, 2, &beams::hadamard_row(16, 2), 5);
        let paths = some_paths(&cfg);
        let h1 = channel_taps(&paths[..1], &cfg, &tx, &rx).unwrap();
        let h2 = channel_taps(&paths[1..], &cfg, &tx, &rx).unwrap();
        let sum = measure(&(&h1 + &h2), &b, &cfg, 4).unwrap();
        let only2 = measure(&h2, &b, &cfg, 4).unwrap();
        let quiet = WaveformConfig {
            noise_psd: 0.0,
            ..cfg.clone()
        };
        let only1 = measure(&h1, &b, &quiet, 4).unwrap();
        for m in 0..b.len() {
            let diff = &sum.y[m] - &only2.y[m];
            assert!((diff - &only1.y[m]).camax() < 1e-9);
        }
    }
}
