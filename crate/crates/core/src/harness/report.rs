//! Metrics report, CSV emitters and the corrected-position reader.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{cdf_points, percentile, MatchedError};
use super::run::{generate_all, track_all, track_file, write_tracks, RunConfig, TrackRecord};
use crate::locate::LocalizationMode;
use crate::pipeline::{export_dataset, DatasetSample, FrameOutput, TrackingConfig};
use crate::{Error, Result};

pub const PERCENTILES: [f64; 4] = [5.0, 50.0, 80.0, 95.0];

/// Error ceilings a matched LOS / first-order path is checked against.
pub const DOD_BOUND_DEG: f64 = 3.0;
pub const DOA_BOUND_DEG: f64 = 8.0;
pub const TDOA_BOUND_NS: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    /// Nearest-rank percentiles at [`PERCENTILES`], meters.
    pub percentiles: [f64; 4],
    pub errors: Vec<f64>,
}

impl MethodErrors {
    pub fn new(errors: Vec<f64>) -> Result<Self> {
        let mut percentiles = [0.0; 4];
        for (o, p) in percentiles.iter_mut().zip(PERCENTILES) {
            *o = percentile(&errors, p)?;
        }
        Ok(Self { percentiles, errors })
    }

    pub fn median(&self) -> f64 {
        self.percentiles[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathErrors {
    pub total: usize,
    pub within_bounds: usize,
    pub fraction_within: f64,
    pub matched: Vec<MatchedError>,
}

impl PathErrors {
    pub fn new(matched: Vec<MatchedError>) -> Self {
        let within = matched.iter().filter(|m| within_bounds(m)).count();
        Self {
            total: matched.len(),
            within_bounds: within,
            fraction_within: if matched.is_empty() { 0.0 } else { within as f64 / matched.len() as f64 },
            matched,
        }
    }
}

pub fn within_bounds(m: &MatchedError) -> bool {
    m.dod_deg <= DOD_BOUND_DEG && m.doa_deg <= DOA_BOUND_DEG && m.tdoa_ns <= TDOA_BOUND_NS
}

/// Search-space sizes `∏ N_k^a`: tracking frames versus full dictionaries of
/// the same resolution spanning the whole angle and delay range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub full_matched_space: f64,
    pub mean_reduced_space: f64,
    pub max_reduced_space: f64,
    pub ratio: f64,
}

impl Complexity {
    pub fn new(frames: &[&FrameOutput], cfg: &TrackingConfig) -> Self {
        let full = cfg.matched_full_space();
        let spaces: Vec<f64> = frames.iter().filter(|f| !f.full).map(|f| f.search_space).collect();
        let mean = if spaces.is_empty() { 0.0 } else { spaces.iter().sum::<f64>() / spaces.len() as f64 };
        Self {
            full_matched_space: full,
            mean_reduced_space: mean,
            max_reduced_space: spaces.iter().copied().fold(0.0, f64::max),
            ratio: mean / full,
        }
    }
}

/// Deterministic work counters (wall-clock time is kept out of the report
/// so reruns are byte-identical).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub frames: usize,
    pub full_frames: usize,
    pub dead_reckoned: usize,
    pub los_blocked: usize,
    pub atom_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub note: String,
    pub initial: [f64; 4],
    pub kf: [f64; 4],
    pub corrected: [f64; 4],
}

impl Default for Reference {
    fn default() -> Self {
        Self {
            note: "published ray-traced results at the 5/50/80/95th percentiles, for comparison only".into(),
            initial: [0.058, 0.418, 0.833, 1.611],
            kf: [0.027, 0.171, 0.575, 1.574],
            corrected: [0.014, 0.065, 0.120, 0.197],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub notes: Vec<String>,
    pub trajectories: usize,
    pub initial: MethodErrors,
    pub kf: MethodErrors,
    pub corrected: Option<MethodErrors>,
    pub paths: PathErrors,
    pub complexity: Complexity,
    pub counters: Counters,
    pub reference: Reference,
}

fn planar_error(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn build_report(
    tracks: &[Vec<TrackRecord>],
    cfg: &TrackingConfig,
    corrected: Option<Vec<f64>>,
) -> Result<MetricsReport> {
    let all: Vec<&TrackRecord> = tracks.iter().flatten().collect();
    let outputs: Vec<&FrameOutput> = all.iter().map(|r| &r.output).collect();
    let initial = outputs.iter().map(|o| planar_error(o.position.xy, o.truth_xy)).collect();
    let kf = outputs.iter().map(|o| planar_error(o.kf_xy, o.truth_xy)).collect();
    Ok(MetricsReport {
        notes: vec![
            "2D errors in meters; percentiles are nearest-rank".into(),
            format!(
                "paths matched greedily to the nearest true path by DoD + DoA angle (rad, weight 1) + |TDoA| (ns, weight 1/7); bounds {DOD_BOUND_DEG} deg / {DOA_BOUND_DEG} deg / {TDOA_BOUND_NS} ns"
            ),
            "complexity: product of per-dimension dictionary sizes".into(),
        ],
        trajectories: tracks.len(),
        initial: MethodErrors::new(initial)?,
        kf: MethodErrors::new(kf)?,
        corrected: corrected.map(MethodErrors::new).transpose()?,
        paths: PathErrors::new(all.iter().flat_map(|r| r.matched.iter().copied()).collect()),
        complexity: Complexity::new(&outputs, cfg),
        counters: Counters {
            frames: all.len(),
            full_frames: outputs.iter().filter(|o| o.full).count(),
            dead_reckoned: outputs
                .iter()
                .filter(|o| o.position.mode == LocalizationMode::DeadReckoning)
                .count(),
            los_blocked: all.iter().filter(|r| r.los_blocked).count(),
            atom_evaluations: outputs.iter().map(|o| o.evaluations).sum(),
        },
        reference: Reference::default(),
    })
}

/// One line of the corrector's output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub t: f64,
    pub dx: [f64; 2],
    pub x_star: [f64; 2],
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

/// Corrected 2D errors; predictions pair line by line with the dataset
/// they were made on.
pub fn corrected_errors(preds: &[Prediction], samples: &[DatasetSample]) -> Result<Vec<f64>> {
    if preds.len() != samples.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} dataset samples",
            preds.len(),
            samples.len()
        )));
    }
    preds
        .iter()
        .zip(samples)
        .enumerate()
        .map(|(i, (p, s))| {
            if (p.t - s.t).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "prediction {} has t = {} but sample has t = {}",
                    i + 1,
                    p.t,
                    s.t
                )));
            }
            Ok(planar_error(p.x_star, s.truth))
        })
        .collect()
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::json("report", e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// `method,error_m,cdf` rows.
pub fn write_cdf(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("method,error_m,cdf\n");
    let methods = [("initial", Some(&report.initial)), ("kf", Some(&report.kf)), ("corrected", report.corrected.as_ref())];
    for (name, m) in methods {
        let Some(m) = m else { continue };
        for (x, c) in cdf_points(&m.errors) {
            out.push_str(&format!("{name},{x},{c}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Truth, raw estimate and KF tracks per frame.
pub fn write_overlay(tracks: &[Vec<TrackRecord>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "trajectory,index,t,truth_x,truth_y,est_x,est_y,kf_x,kf_y,mode").map_err(io)?;
    for r in tracks.iter().flatten() {
        let o = &r.output;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{:?}",
            r.trajectory,
            o.index,
            o.t,
            o.truth_xy[0],
            o.truth_xy[1],
            o.position.xy[0],
            o.position.xy[1],
            o.kf_xy[0],
            o.kf_xy[1],
            o.position.mode
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Generates, tracks, scores and writes everything under `cfg.output_dir`:
/// `config.json`, `tracks/`, `dataset/` (optional), `report.json`,
/// `cdf.csv` and `traj_overlay.csv`.
pub fn run_experiment(cfg: &RunConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let scene = cfg.scene()?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir.join("tracks")).map_err(|e| Error::io(dir, e))?;
    cfg.save(dir.join("config.json"))?;
    let trajectories = generate_all(cfg, &scene)?;
    let tracks = track_all(cfg, &scene, &trajectories);
    for (id, t) in tracks.iter().enumerate() {
        write_tracks(t, track_file(dir, id))?;
    }
    if cfg.export_dataset {
        let t = &cfg.tracking;
        let outputs: Vec<Vec<FrameOutput>> =
            tracks.iter().map(|t| t.iter().map(|r| r.output.clone()).collect()).collect();
        export_dataset(&outputs, t.window, t.interval, t.n_est, dir.join("dataset"))?;
    }
    let report = build_report(&tracks, &cfg.tracking, None)?;
    write_report(&report, dir.join("report.json"))?;
    write_cdf(&report, dir.join("cdf.csv"))?;
    write_overlay(&tracks, dir.join("traj_overlay.csv"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_are_monotone() {
        let m = MethodErrors::new(vec![0.5, 0.1, 3.0, 0.2, 0.9, 1.1, 0.05]).unwrap();
        assert!(m.percentiles.windows(2).all(|w| w[0] <= w[1]));
        assert!(MethodErrors::new(vec![]).is_err());
    }

    #[test]
    fn corrected_errors_pair_by_line() {
        let sample = |t: f64| DatasetSample {
            t,
            t_hist: vec![t],
            z: vec![],
            x: vec![[0.0, 0.0]],
            target: [1.0, 0.0],
            truth: [1.0, 0.0],
        };
        let preds = [
            Prediction { t: 0.0, dx: [1.0, 0.0], x_star: [1.0, 0.0] },
            Prediction { t: 0.5, dx: [0.0, 0.0], x_star: [4.0, 4.0] },
        ];
        let e = corrected_errors(&preds, &[sample(0.0), sample(0.5)]).unwrap();
        assert_eq!(e, vec![0.0, 5.0]);
        assert!(corrected_errors(&preds, &[sample(0.0), sample(0.6)]).is_err());
        assert!(corrected_errors(&preds[..1], &[sample(0.0), sample(0.5)]).is_err());
    }

    #[test]
    fn predictions_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pred.jsonl");
        std::fs::write(&p, "{\"t\":0.25,\"dx\":[0.1,-0.2],\"x_star\":[3.0,-5.0]}\n\n").unwrap();
        let preds = read_predictions(&p).unwrap();
        assert_eq!(preds, vec![Prediction { t: 0.25, dx: [0.1, -0.2], x_star: [3.0, -5.0] }]);
        std::fs::write(&p, "{\"t\":0.25}\n").unwrap();
        let err = read_predictions(&p).unwrap_err().to_string();
        assert!(err.contains(":1"), "{err}");
    }
}
