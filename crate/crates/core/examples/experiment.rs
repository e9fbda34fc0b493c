//! A small end-to-end experiment: tracks a few drives, writes tracks, the
//! corrector dataset, report.json, cdf.csv and traj_overlay.csv, then scores
//! a stand-in corrector through the predictions file format.

use std::io::Write as _;

use momp_track::harness::{build_report, corrected_errors, read_predictions, read_run_tracks, run_experiment, RunConfig};
use momp_track::pipeline::read_samples;

fn main() -> momp_track::Result<()> {
    let dir = std::env::temp_dir().join("momp_track_experiment");
    let mut cfg = RunConfig {
        trajectories: 4,
        duration: 0.05,
        seed: 1,
        output_dir: dir.clone(),
        ..RunConfig::default()
    };
    cfg.tracking.window = 4;
    cfg.tracking.interval = 10;
    let report = run_experiment(&cfg)?;
    println!("outputs under {}", dir.display());
    println!("2D error p5/p50/p80/p95 raw {:.3?} m", report.initial.percentiles);
    println!("                        kf  {:.3?} m", report.kf.percentiles);
    println!(
        "{:.1}% of matched paths within bounds; search space ratio {:.2e}",
        100.0 * report.paths.fraction_within,
        report.complexity.ratio
    );

    // stand-in corrector: the mean training correction, applied everywhere
    let train = read_samples(dir.join("dataset/train.jsonl"))?;
    let test = read_samples(dir.join("dataset/test.jsonl"))?;
    let n = train.len() as f64;
    let dx = [0, 1].map(|k| train.iter().map(|s| s.target[k]).sum::<f64>() / n);
    let pred_path = dir.join("predictions.jsonl");
    let mut f = std::fs::File::create(&pred_path).expect("predictions file");
    for s in &test {
        let x = s.x.last().unwrap();
        let line = serde_json::json!({ "t": s.t, "dx": dx, "x_star": [x[0] + dx[0], x[1] + dx[1]] });
        writeln!(f, "{line}").expect("write prediction");
    }
    drop(f);
    let corrected = corrected_errors(&read_predictions(&pred_path)?, &test)?;
    let report = build_report(&read_run_tracks(&dir)?, &cfg.tracking, Some(corrected))?;
    println!("with mean-offset correction {:.3?} m", report.corrected.unwrap().percentiles);
    Ok(())
}
