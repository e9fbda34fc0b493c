//! Tracks channel and position along a drive through the default canyon and
//! prints matched-path errors and 2D position errors.

use std::time::Instant;

use momp_track::harness::{match_paths, percentile};
use momp_track::pipeline::{Tracker, TrackingConfig};
use momp_track::scene::{generate_trajectory, Scene, TrajectorySpec};

fn main() -> momp_track::Result<()> {
    let frames: usize = std::env::args().nth(1).map_or(400, |s| s.parse().expect("frame count"));
    let scene = Scene::urban_canyon();
    let cfg = TrackingConfig::default();
    let spec = TrajectorySpec {
        start_xy: [-10.0, -5.25],
        speed_kmh: 60.0,
        duration: frames as f64 * cfg.tp,
        tp: cfg.tp,
        seed: 11,
    };
    let traj = generate_trajectory(&scene, &spec)?;
    let mut tracker = Tracker::new(cfg.clone(), &scene, 11);
    let (mut matched, mut raw, mut kf) = (Vec::new(), Vec::new(), Vec::new());
    let start = Instant::now();
    for (n, frame) in traj.iter().enumerate() {
        let t0 = Instant::now();
        let out = tracker.step(frame);
        let m = match_paths(&out.estimate.paths, &frame.true_paths);
        let err = ((out.position.xy[0] - out.truth_xy[0]).powi(2) + (out.position.xy[1] - out.truth_xy[1]).powi(2)).sqrt();
        let kerr = ((out.kf_xy[0] - out.truth_xy[0]).powi(2) + (out.kf_xy[1] - out.truth_xy[1]).powi(2)).sqrt();
        if n % 50 == 0 || out.full || std::env::var("VERBOSE").is_ok() {
            println!(
                "frame {n:5} full={} {:?} paths={} matched={} err={err:.3} m kf={kerr:.3} m  {:.1} ms, space {:.2e}",
                out.full as u8,
                out.position.mode,
                out.estimate.len(),
                m.len(),
                t0.elapsed().as_secs_f64() * 1e3,
                out.search_space,
            );
            for p in &m {
                println!("      dod {:.3}°  doa {:.3}°  tdoa {:.3} ns", p.dod_deg, p.doa_deg, p.tdoa_ns);
            }
            for p in &out.estimate.paths {
                println!("      est {:?} tdoa {:.2} ns |g| {:.2e}", p.order, p.tdoa * 1e9, p.gain.norm());
            }
        }
        matched.extend(m);
        raw.push(err);
        kf.push(kerr);
    }
    let ok = matched
        .iter()
        .filter(|m| m.dod_deg <= 3.0 && m.doa_deg <= 8.0 && m.tdoa_ns <= 7.0)
        .count();
    println!(
        "{} frames in {:.1} s; {ok}/{} matches within 3°/8°/7 ns",
        traj.len(),
        start.elapsed().as_secs_f64(),
        matched.len()
    );
    for p in [5.0, 50.0, 80.0, 95.0] {
        println!("p{p}: raw {:.3} m, kf {:.3} m", percentile(&raw, p)?, percentile(&kf, p)?);
    }
    Ok(())
}
