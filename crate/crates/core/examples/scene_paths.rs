//! Generates a short drive through the default street canyon and prints the
//! ground-truth paths seen by the active roof panel.

use momp_track::scene::{generate_trajectory, Scene, TrajectorySpec};

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    let spec = TrajectorySpec {
        start_xy: [-25.0, -5.25],
        speed_kmh: 60.0,
        duration: 3.0,
        tp: 0.5e-3,
        seed: 7,
    };
    let frames = generate_trajectory(&scene, &spec)?;
    println!("{} frames, clock offset {:.2} ns", frames.len(), frames[0].clock_offset * 1e9);
    for f in frames.iter().step_by(500) {
        println!(
            "t={:.3}s x={:+.2} panel={} blocked={}",
            f.t, f.position.x, f.active_panel, f.los_blocked
        );
        for p in &f.true_paths {
            println!(
                "    {:?}: |g|={:.2e} tdoa={:6.2} ns  dod=({:+.3},{:.3}) doa=({:+.3},{:.3})",
                p.order,
                p.gain.norm(),
                p.tdoa * 1e9,
                p.dod_az,
                p.dod_el,
                p.doa_az,
                p.doa_el
            );
        }
    }
    Ok(())
}
