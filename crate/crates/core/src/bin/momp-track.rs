use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use momp_track::harness::{
    build_report, corrected_errors, read_predictions, read_report, read_run_tracks,
    run_experiment, write_cdf, write_overlay, write_report, write_scene, MetricsReport, RunConfig,
};
use momp_track::pipeline::{export_dataset, read_samples, FrameOutput};

#[derive(Parser)]
#[command(version, about = "Joint mmWave channel and vehicle position tracking")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Scene and ground-truth trajectories.
    #[command(subcommand)]
    Scene(SceneCmd),
    /// Channel and position tracking.
    #[command(subcommand)]
    Track(TrackCmd),
    /// Corrector dataset.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Reports from a finished run.
    #[command(subcommand)]
    Eval(EvalCmd),
}

#[derive(Subcommand)]
enum SceneCmd {
    /// Write the scene and its ground-truth trajectories.
    Gen {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum TrackCmd {
    /// Track every trajectory and write tracks, dataset and report.
    Run {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        seed: u64,
        /// Skip the dataset export.
        #[arg(long)]
        no_dataset: bool,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Export windowed histories of a run as train/test JSON Lines.
    Export {
        #[arg(long, default_value = "run")]
        run: PathBuf,
        /// Defaults to <run>/dataset.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Recompute report.json from the saved tracks.
    Report {
        #[arg(long, default_value = "run")]
        run: PathBuf,
        /// Corrector predictions ({"t","dx","x_star"} per line).
        #[arg(long)]
        corrected: Option<PathBuf>,
        /// Dataset the predictions were made on; defaults to
        /// <run>/dataset/test.jsonl.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write cdf.csv from report.json.
    Cdf {
        #[arg(long, default_value = "run")]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; its fields override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene JSON (default: built-in street canyon).
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Seconds per trajectory.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    speed_kmh: Option<f64>,
}

impl RunArgs {
    fn config(&self, seed: Option<u64>) -> momp_track::Result<RunConfig> {
        let d = RunConfig::default();
        let flags = RunConfig {
            scene: self.scene.clone(),
            output_dir: self.out.clone(),
            trajectories: self.trajectories.unwrap_or(d.trajectories),
            duration: self.duration.unwrap_or(d.duration),
            speed_kmh: self.speed_kmh.unwrap_or(d.speed_kmh),
            seed: seed.unwrap_or(d.seed),
            ..d
        };
        let cfg = match &self.config {
            Some(p) => flags.overridden_by(p)?,
            None => flags,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(r: &MetricsReport) {
    let p = |name: &str, v: &[f64; 4]| println!("{name:>10}: {:.3} / {:.3} / {:.3} / {:.3} m", v[0], v[1], v[2], v[3]);
    println!("2D error percentiles 5/50/80/95 over {} frames", r.counters.frames);
    p("initial", &r.initial.percentiles);
    p("kf", &r.kf.percentiles);
    if let Some(c) = &r.corrected {
        p("corrected", &c.percentiles);
    }
    println!(
        "matched paths within bounds: {}/{} ({:.1}%), complexity ratio {:.3e}",
        r.paths.within_bounds,
        r.paths.total,
        100.0 * r.paths.fraction_within,
        r.complexity.ratio
    );
}

fn outputs(dir: &Path) -> momp_track::Result<(RunConfig, Vec<Vec<momp_track::harness::TrackRecord>>)> {
    let cfg = RunConfig::load(dir.join("config.json"))?;
    Ok((cfg, read_run_tracks(dir)?))
}

fn run(cli: Cli) -> momp_track::Result<()> {
    match cli.cmd {
        Cmd::Scene(SceneCmd::Gen { run, seed }) => {
            let cfg = run.config(seed)?;
            write_scene(&cfg)?;
            let dir = &cfg.output_dir;
            println!("wrote {} trajectories under {}", cfg.trajectories, dir.display());
        }
        Cmd::Track(TrackCmd::Run { run, seed, no_dataset }) => {
            let mut cfg = run.config(Some(seed))?;
            cfg.export_dataset &= !no_dataset;
            let start = Instant::now();
            let report = run_experiment(&cfg)?;
            print_summary(&report);
            eprintln!("{:.1} s", start.elapsed().as_secs_f64());
        }
        Cmd::Dataset(DatasetCmd::Export { run, out }) => {
            let (cfg, tracks) = outputs(&run)?;
            let frames: Vec<Vec<FrameOutput>> =
                tracks.iter().map(|t| t.iter().map(|r| r.output.clone()).collect()).collect();
            let t = &cfg.tracking;
            let out = out.unwrap_or_else(|| run.join("dataset"));
            let s = export_dataset(&frames, t.window, t.interval, t.n_est, &out)?;
            println!("{} train / {} test samples in {}", s.train, s.test, out.display());
        }
        Cmd::Eval(EvalCmd::Report { run, corrected, dataset }) => {
            let (cfg, tracks) = outputs(&run)?;
            let corrected = match corrected {
                Some(p) => {
                    let samples = read_samples(dataset.unwrap_or_else(|| run.join("dataset").join("test.jsonl")))?;
                    Some(corrected_errors(&read_predictions(p)?, &samples)?)
                }
                None => None,
            };
            let report = build_report(&tracks, &cfg.tracking, corrected)?;
            write_report(&report, run.join("report.json"))?;
            write_overlay(&tracks, run.join("traj_overlay.csv"))?;
            print_summary(&report);
        }
        Cmd::Eval(EvalCmd::Cdf { run, out }) => {
            let report = read_report(run.join("report.json"))?;
            let out = out.unwrap_or_else(|| run.join("cdf.csv"));
            write_cdf(&report, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
