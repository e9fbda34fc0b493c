//! Training beam and pilot construction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::{axis_factor, kron, ArrayGeometry};
use super::measure::BeamformerSet;

/// Row `row` of the Sylvester Hadamard matrix of order `q` (a power of two).
pub fn hadamard_row(q: usize, row: usize) -> Vec<f64> {
    assert!(q.is_power_of_two(), "Hadamard order must be a power of two");
    assert!(row < q);
    (0..q)
        .map(|col| {
            if (row & col).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Unit-norm separable beam steered to direction cosines `(ux, uy)`.
pub fn steered_beam(geom: &ArrayGeometry, ux: f64, uy: f64) -> Vec<Complex64> {
    let bx = axis_factor(geom.nx, geom.spacing, ux);
    let by = axis_factor(geom.ny, geom.spacing, uy);
    let scale = 1.0 / (geom.len() as f64).sqrt();
    kron(&bx, &by).into_iter().map(|z| z * scale).collect()
}

fn random_phase_beam(geom: &ArrayGeometry, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut axis = |n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
            .collect()
    };
    let bx = axis(geom.nx);
    let by = axis(geom.ny);
    let scale = 1.0 / (geom.len() as f64).sqrt();
    kron(&bx, &by).into_iter().map(|z| z * scale).collect()
}

/// `m` measurements with separable random-phase precoders and `n_rf`-column
/// random-phase combiners; the same pilot on every measurement.
pub fn random_beams(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    m: usize,
    n_rf: usize,
    pilot: &[f64],
    seed: u64,
) -> BeamformerSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut precoders = Vec::with_capacity(m);
    let mut combiners = Vec::with_capacity(m);
    for _ in 0..m {
        precoders.push(DVector::from_vec(random_phase_beam(tx, &mut rng)));
        let cols: Vec<_> = (0..n_rf)
            .map(|_| DVector::from_vec(random_phase_beam(rx, &mut rng)))
            .collect();
        combiners.push(DMatrix::from_columns(&cols));
    }
    BeamformerSet::new(precoders, combiners, vec![pilot.to_vec(); m])
        .expect("random-phase combiners have full column rank")
}
