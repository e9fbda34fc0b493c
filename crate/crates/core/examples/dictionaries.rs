//! Builds the full initial-access dictionaries and the reduced tracking
//! dictionaries around a previous estimate, and compares their sizes.

use momp_track::dict::{build_full, build_reduced_angular, build_reduced_delay_with_lead, reduced_set};
use momp_track::estimate::ChannelEstimate;
use momp_track::pipeline::{window_origin, TrackingConfig};
use momp_track::scene::{generate_trajectory, paths_in_window, Scene, TrajectorySpec};

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    let tc = TrackingConfig::default();
    let spec = TrajectorySpec { start_xy: [0.0, -5.25], speed_kmh: 60.0, duration: 0.001, tp: tc.tp, seed: 2 };
    let frame = &generate_trajectory(&scene, &spec)?[0];
    let (tx, rx) = (scene.bs_array(), frame.rx_array(&scene));
    let mut cfg = tc.waveform.clone();
    cfg.t_off = window_origin(frame.true_paths[0].toa, &cfg);

    let full = build_full(&cfg, &tx, &rx, tc.ia_atoms)?;
    println!("initial access: {:?} atoms = {:.3e}", full.sizes(), full.atom_count());
    for p in paths_in_window(&frame.true_paths, &cfg) {
        let j = full.nearest_atom(&p);
        let a = full.decode(j);
        println!(
            "  {:?} nearest atom {j:?}: dod ({:+.3}, {:.3}) vs ({:+.3}, {:.3}), toa err {:.3} ns",
            p.order,
            a.dod_az,
            a.dod_el,
            p.dod_az,
            p.dod_el,
            (a.toa - p.toa) * 1e9
        );
    }

    // the truth stands in for last frame's estimate
    let prev = ChannelEstimate::from_paths(0.0, paths_in_window(&frame.true_paths, &cfg));
    let ang = build_reduced_angular(&prev, tc.omega_deg.to_radians(), tc.d_omega_deg.to_radians(), &tx, &rx)?;
    let delay = build_reduced_delay_with_lead(&prev, tc.eps, tc.d_tau, tc.delay_lead, &cfg)?;
    let reduced = reduced_set(ang, delay, &tx, &rx, &cfg);
    let matched = tc.matched_full_space();
    println!("tracking: {:?} atoms = {:.3e}", reduced.sizes(), reduced.atom_count());
    println!(
        "full space at tracking resolution {matched:.3e}; ratio {:.2e}",
        reduced.atom_count() / matched
    );
    Ok(())
}
