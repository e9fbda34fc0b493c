//! Experiment configuration and the multi-trajectory runner.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{match_paths, MatchedError};
use crate::pipeline::{track_trajectory, FrameOutput, TrackingConfig};
use crate::scene::{generate_trajectory, write_trajectory_jsonl, Scene, TrajectoryFrame, TrajectorySpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Scene JSON; the built-in street canyon when absent.
    pub scene: Option<PathBuf>,
    pub tracking: TrackingConfig,
    pub trajectories: usize,
    /// Seconds per trajectory.
    pub duration: f64,
    pub speed_kmh: f64,
    /// x of the first start; later trajectories start 3 m further on.
    pub start_x: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub export_dataset: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            tracking: TrackingConfig::default(),
            trajectories: 8,
            duration: 3.0,
            speed_kmh: 60.0,
            start_x: -25.0,
            seed: 0,
            output_dir: PathBuf::from("run"),
            export_dataset: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `self` with every field present in the JSON file at `path` replaced
    /// by the file's value (objects merge recursively).
    pub fn overridden_by(&self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ctx = || path.display().to_string();
        let over: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::json(ctx(), e))?;
        let mut base = serde_json::to_value(self).map_err(|e| Error::json("run config", e))?;
        merge(&mut base, over);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::json(ctx(), e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("run config", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tracking;
        let w = &t.waveform;
        let positive = [
            ("duration", self.duration),
            ("speed_kmh", self.speed_kmh),
            ("tracking.tp", t.tp),
            ("tracking.omega_deg", t.omega_deg),
            ("tracking.d_omega_deg", t.d_omega_deg),
            ("tracking.eps", t.eps),
            ("tracking.d_tau", t.d_tau),
            ("waveform.ts", w.ts),
            ("waveform.rolloff", w.rolloff),
            ("waveform.fc", w.fc),
            ("waveform.bandwidth", w.bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("trajectories", self.trajectories),
            ("tracking.n_est", t.n_est),
            ("tracking.full_period", t.full_period),
            ("tracking.window", t.window),
            ("tracking.interval", t.interval),
            ("waveform.nd", w.nd),
            ("waveform.q", w.q),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(p) => Scene::load(p),
            None => Ok(Scene::urban_canyon()),
        }
    }

    /// Trajectory `id`: lanes taken in turn, starts staggered by 3 m.
    pub fn trajectory_spec(&self, scene: &Scene, id: usize) -> TrajectorySpec {
        let lane = &scene.lanes[id % scene.lanes.len()];
        TrajectorySpec {
            start_xy: [self.start_x + 3.0 * id as f64, lane.y],
            speed_kmh: self.speed_kmh,
            duration: self.duration,
            tp: self.tracking.tp,
            seed: mix(self.seed, id as u64, 0),
        }
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub(crate) fn mix(seed: u64, id: u64, stream: u64) -> u64 {
    let mut z = seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One tracked frame with its path-matching errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackRecord {
    pub trajectory: usize,
    #[serde(flatten)]
    pub output: FrameOutput,
    pub matched: Vec<MatchedError>,
    pub los_blocked: bool,
}

pub fn track_one(cfg: &RunConfig, scene: &Scene, id: usize, frames: &[TrajectoryFrame]) -> Vec<TrackRecord> {
    let outputs = track_trajectory(&cfg.tracking, scene, frames, mix(cfg.seed, id as u64, 1));
    outputs
        .into_iter()
        .zip(frames)
        .map(|(output, f)| TrackRecord {
            trajectory: id,
            matched: match_paths(&output.estimate.paths, &f.true_paths),
            output,
            los_blocked: f.los_blocked,
        })
        .collect()
}

pub fn generate_all(cfg: &RunConfig, scene: &Scene) -> Result<Vec<Vec<TrajectoryFrame>>> {
    (0..cfg.trajectories)
        .map(|id| generate_trajectory(scene, &cfg.trajectory_spec(scene, id)))
        .collect()
}

/// Writes `scene.json`, `config.json` and `trajectories/truth_NNN.jsonl`
/// under `cfg.output_dir`.
pub fn write_scene(cfg: &RunConfig) -> Result<()> {
    let scene = cfg.scene()?;
    let dir = &cfg.output_dir;
    let tdir = dir.join("trajectories");
    std::fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    scene.save(dir.join("scene.json"))?;
    cfg.save(dir.join("config.json"))?;
    for (id, frames) in generate_all(cfg, &scene)?.iter().enumerate() {
        write_trajectory_jsonl(frames, tdir.join(format!("truth_{id:03}.jsonl")))?;
    }
    Ok(())
}

/// Tracks every trajectory; results are ordered by trajectory id whatever
/// the scheduling.
pub fn track_all(cfg: &RunConfig, scene: &Scene, trajectories: &[Vec<TrajectoryFrame>]) -> Vec<Vec<TrackRecord>> {
    trajectories
        .par_iter()
        .enumerate()
        .map(|(id, frames)| track_one(cfg, scene, id, frames))
        .collect()
}

pub fn write_tracks(records: &[TrackRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::json("track record", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tracks(path: impl AsRef<Path>) -> Result<Vec<TrackRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}

pub fn track_file(dir: &Path, id: usize) -> PathBuf {
    dir.join("tracks").join(format!("track_{id:03}.jsonl"))
}

/// Reads `tracks/track_000.jsonl, …` until the first missing id.
pub fn read_run_tracks(dir: &Path) -> Result<Vec<Vec<TrackRecord>>> {
    let mut out = Vec::new();
    while track_file(dir, out.len()).exists() {
        out.push(read_tracks(track_file(dir, out.len()))?);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no tracks under {}", dir.join("tracks").display())));
    }
    Ok(out)
}
