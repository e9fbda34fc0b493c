mod common;

use common::Geometry;
use momp_track::harness::percentile;
use momp_track::locate::solve_position;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Median 2D error over 500 LOS + 2 reflection draws with Gaussian noise on
/// every local angle and every TDoA; failed solves count as infinite error.
fn median_error(angle_deg: f64, tdoa_ns: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ang = Normal::new(0.0, angle_deg.to_radians()).unwrap();
    let del = Normal::new(0.0, tdoa_ns * 1e-9).unwrap();
    let errors: Vec<f64> = (0..500)
        .map(|_| {
            let g = Geometry::random(&mut rng, 2);
            let mut inp = g.input(g.paths(true));
            for p in &mut inp.paths {
                p.dod_az += ang.sample(&mut rng);
                p.dod_el += ang.sample(&mut rng);
                p.doa_az += ang.sample(&mut rng);
                p.doa_el += ang.sample(&mut rng);
                p.tdoa += del.sample(&mut rng);
            }
            match solve_position(&inp) {
                Ok(e) => (e.planar() - g.rx.xy()).norm(),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    percentile(&errors, 50.0).unwrap()
}

#[test]
fn error_is_finite_and_shrinks_with_noise() {
    let full = median_error(1.0, 1.0);
    let half = median_error(0.5, 0.5);
    assert!(full.is_finite(), "median error {full}");
    assert!(half < full, "halved noise gave {half} m vs {full} m");
}

#[test]
fn noiseless_draws_are_exact() {
    assert!(median_error(0.0, 0.0) < 1e-6);
}
