//! Measures one frame of the canyon channel through random training beams and
//! checks that the whitened noise is white.

use momp_track::pipeline::window_origin;
use momp_track::scene::{generate_trajectory, paths_in_window, Scene, TrajectorySpec};
use momp_track::signal::{beams, measure_paths, WaveformConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    let spec = TrajectorySpec { start_xy: [-10.0, -5.25], speed_kmh: 60.0, duration: 0.001, tp: 0.5e-3, seed: 3 };
    let frame = &generate_trajectory(&scene, &spec)?[0];
    let (tx, rx) = (scene.bs_array(), frame.rx_array(&scene));
    let pilot = beams::hadamard_row(64, 1);
    let b = beams::random_beams(&tx, &rx, 64, 4, &pilot, 1);

    // open the receive window just before the first arrival
    let mut cfg = WaveformConfig::default();
    cfg.t_off = window_origin(frame.true_paths[0].toa, &cfg);
    let paths = paths_in_window(&frame.true_paths, &cfg);
    let signal = measure_paths(&paths, &tx, &rx, &b, &WaveformConfig { noise_psd: 0.0, ..cfg.clone() }, 0)?;
    let noisy = measure_paths(&paths, &tx, &rx, &b, &cfg, 7)?;
    let e_signal = signal.stacked().norm_squared();
    let e_noise = (noisy.stacked() - signal.stacked()).norm_squared();
    println!(
        "{} paths in the tap window, {} measurements × {} RF chains × {} samples",
        paths.len(),
        b.len(),
        b.n_rf(),
        cfg.q
    );
    println!("receive SNR after whitening: {:.1} dB", 10.0 * (e_signal / e_noise).log10());

    // noise alone: sample covariance across RF chains
    let empty = measure_paths(&[], &tx, &rx, &b, &cfg, 9)?;
    let mut cov = DMatrix::<Complex64>::zeros(b.n_rf(), b.n_rf());
    let mut n = 0.0;
    for y in &empty.y {
        cov += y * y.adjoint();
        n += y.ncols() as f64;
    }
    cov /= Complex64::new(n * cfg.noise_psd, 0.0);
    println!("whitened noise covariance / σ² over {n} draws:");
    for r in cov.row_iter() {
        println!("  {}", r.iter().map(|z| format!("{:+.3}{:+.3}i", z.re, z.im)).collect::<Vec<_>>().join("  "));
    }
    Ok(())
}
