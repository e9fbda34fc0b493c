//! Runs multidimensional OMP on one frame: first with the full dictionaries
//! (initial access), then with the reduced dictionaries around the result.

use std::time::Instant;

use momp_track::dict::build_full;
use momp_track::harness::match_paths;
use momp_track::momp::{estimate_channel, MompProblem};
use momp_track::pipeline::{estimate_frame, window_origin, TrackingConfig};
use momp_track::scene::{generate_trajectory, paths_in_window, Scene, TrajectorySpec};
use momp_track::signal::{beams, measure_paths, PathOrder};

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    let tc = TrackingConfig::default();
    let spec = TrajectorySpec { start_xy: [-10.0, -5.25], speed_kmh: 60.0, duration: 0.001, tp: tc.tp, seed: 3 };
    let frame = &generate_trajectory(&scene, &spec)?[0];
    let (tx, rx) = (scene.bs_array(), frame.rx_array(&scene));
    let mut cfg = tc.waveform.clone();
    cfg.t_off = window_origin(frame.true_paths[0].toa, &cfg);
    let truth = paths_in_window(&frame.true_paths, &cfg);
    let pilot = beams::hadamard_row(cfg.q, 1);
    let b = beams::random_beams(&tx, &rx, tc.ia_measurements, tc.ia_rf_chains, &pilot, 5);
    let batch = measure_paths(&truth, &tx, &rx, &b, &cfg, 6)?;

    // one plain MOMP call over the whole initial-access grid
    let start = Instant::now();
    let dict = build_full(&cfg, &tx, &rx, tc.ia_atoms)?;
    let (est, sol) = estimate_channel(&MompProblem::new(&batch, &dict, tc.n_est), frame.t)?;
    println!(
        "plain MOMP over {:.2e} atoms: {} evaluations, {:.1} s",
        dict.atom_count(),
        sol.diagnostics.evaluations,
        start.elapsed().as_secs_f64()
    );
    println!("  residual curve {:?}", sol.diagnostics.residual_curve.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>());
    for p in &est.paths {
        println!("  tdoa {:6.2} ns |g| {:.2e}", p.tdoa * 1e9, p.gain.norm());
    }

    // the pipeline's coarse-to-fine initial access, then a tracking search
    let start = Instant::now();
    let (ia, space, evals) = estimate_frame(&tc, None, true, &batch, &tx, &rx, frame.t)?;
    println!("coarse-to-fine initial access: {evals} evaluations over {space:.2e} atoms, {:.1} s", start.elapsed().as_secs_f64());
    let (tracked, space, evals) = estimate_frame(&tc, Some(&ia), false, &batch, &tx, &rx, frame.t)?;
    println!("reduced search: {evals} evaluations over {space:.2e} atoms");

    // matching only scores labelled paths; label them all for this comparison
    let mut labelled = tracked.paths.clone();
    for p in &mut labelled {
        p.order = PathOrder::FirstOrder;
    }
    println!("{} true paths in the window", truth.len());
    for (n, m) in match_paths(&labelled, &truth).iter().enumerate() {
        println!(
            "  estimate {n}: dod err {:.2}°, doa err {:.2}°, tdoa err {:.3} ns",
            m.dod_deg, m.doa_deg, m.tdoa_ns
        );
    }
    Ok(())
}
