//! Locates the receiving panel from single-bounce geometry: first with the
//! true path labels, then with labels from the geometric classifier, and
//! shows the dead-reckoning fallback.

use momp_track::estimate::ChannelEstimate;
use momp_track::locate::{dead_reckon, solve_position, LocalizationInput};
use momp_track::pipeline::{classify_paths, ClassifyContext, TrackingConfig};
use momp_track::scene::{generate_trajectory, Scene, TrajectorySpec};
use momp_track::signal::PathOrder;
use nalgebra::Vector2;

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    let tc = TrackingConfig::default();
    let spec = TrajectorySpec { start_xy: [-20.0, -1.75], speed_kmh: 60.0, duration: 0.5, tp: tc.tp, seed: 4 };
    let frames = generate_trajectory(&scene, &spec)?;
    let bs = scene.bs_array();
    for f in frames.iter().step_by(250) {
        let rx = f.rx_array(&scene);
        println!("t={:.3} s, panel at ({:+.3}, {:+.3}, {:.3})", f.t, f.rx_position.x, f.rx_position.y, f.rx_position.z);

        let inp = LocalizationInput::new(bs.origin, bs.orientation, rx.orientation, f.true_paths.clone());
        match solve_position(&inp) {
            Ok(e) => println!("  true labels:       {:?} error {:.2e} m", e.mode, (e.position() - f.rx_position).norm()),
            Err(e) => println!("  true labels:       {e}"),
        }

        let mut est = ChannelEstimate::from_paths(f.t, f.true_paths.clone());
        for p in &mut est.paths {
            p.order = PathOrder::Unknown;
        }
        let ctx = ClassifyContext {
            bs_position: bs.origin,
            bs_orientation: bs.orientation,
            rx_orientation: rx.orientation,
            rx_prior: None,
            threshold: tc.classify_threshold,
            min_bounce_angle: tc.min_bounce_deg.to_radians(),
            los_max_bend: tc.los_max_bend_deg.to_radians(),
            los_window: tc.los_window,
        };
        let labels = classify_paths(&est, &ctx);
        for (p, l) in est.paths.iter_mut().zip(&labels) {
            p.order = *l;
        }
        println!("  classifier labels: {labels:?} (truth {:?})", f.true_paths.iter().map(|p| p.order).collect::<Vec<_>>());
        let inp = LocalizationInput::new(bs.origin, bs.orientation, rx.orientation, est.paths);
        match solve_position(&inp) {
            Ok(e) => println!("  classified:        {:?} error {:.2e} m", e.mode, (e.position() - f.rx_position).norm()),
            Err(e) => println!("  classified:        {e}"),
        }
    }

    let (p, v) = (Vector2::new(frames[0].position.x, frames[0].position.y), frames[0].velocity.xy());
    let next = dead_reckon(p, v, tc.tp);
    let truth = frames[1].position.xy();
    println!("dead reckoning one frame ahead: error {:.2e} m", (next - truth).norm());
    Ok(())
}
