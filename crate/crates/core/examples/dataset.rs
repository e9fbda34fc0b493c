//! Tracks a short drive and turns it into corrector samples: windows of
//! channel-estimate features and position fixes with the correction target.

use momp_track::pipeline::{build_samples, read_samples, track_trajectory, write_samples, TrackingConfig};
use momp_track::scene::{generate_trajectory, Scene, TrajectorySpec};

fn main() -> momp_track::Result<()> {
    let scene = Scene::urban_canyon();
    // a small window so a 60-frame drive yields samples
    let cfg = TrackingConfig { window: 4, interval: 10, ..TrackingConfig::default() };
    let spec = TrajectorySpec { start_xy: [-10.0, -5.25], speed_kmh: 60.0, duration: 0.03, tp: cfg.tp, seed: 8 };
    let frames = generate_trajectory(&scene, &spec)?;
    let outputs = track_trajectory(&cfg, &scene, &frames, 8);
    let samples = build_samples(&outputs, cfg.window, cfg.interval, cfg.n_est)?;
    println!(
        "{} frames → {} samples of {} × {} × 7 features",
        outputs.len(),
        samples.len(),
        cfg.window,
        cfg.n_est
    );
    let s = &samples[0];
    println!("first sample at t = {:.4} s, history {:?}", s.t, s.t_hist);
    println!("  newest fix {:?}, target Δx = ({:+.3}, {:+.3}) m", s.x.last().unwrap(), s.target[0], s.target[1]);
    println!("  strongest path [|g|, ∠g, τ, θaz, θel, φaz, φel] = {:.3?}", s.z.last().unwrap()[0]);

    let dir = std::env::temp_dir().join("momp_track_dataset_example");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("samples.jsonl");
    write_samples(&samples, &path)?;
    let back = read_samples(&path)?;
    println!("wrote and reread {} samples from {}; identical: {}", back.len(), path.display(), back == samples);
    Ok(())
}
