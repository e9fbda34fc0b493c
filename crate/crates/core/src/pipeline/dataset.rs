//! Windowed (Ẑ, x̂) histories exported as JSON Lines for the position
//! corrector.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tracker::FrameOutput;
use crate::estimate::ChannelEstimate;
use crate::{Error, Result};

/// Scalars per path: gain magnitude, gain phase, TDoA (s), DoA az/el,
/// DoD az/el.
pub const PATH_FEATURES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub t: f64,
    /// Timestamps of the window entries, oldest first.
    pub t_hist: Vec<f64>,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<[f64; PATH_FEATURES]>>,
    #[serde(rename = "X")]
    pub x: Vec<[f64; 2]>,
    /// `truth − x̂` at `t`.
    pub target: [f64; 2],
    pub truth: [f64; 2],
}

pub fn path_features(est: &ChannelEstimate, n_est: usize) -> Vec<[f64; PATH_FEATURES]> {
    let mut rows: Vec<_> = est
        .paths
        .iter()
        .take(n_est)
        .map(|p| [p.gain.norm(), p.gain.arg(), p.tdoa, p.doa_az, p.doa_el, p.dod_az, p.dod_el])
        .collect();
    rows.resize(n_est, [0.0; PATH_FEATURES]);
    rows
}

/// One sample per frame with a full window of `window` entries spaced
/// `interval` frames apart: `frames.len() − (window − 1)·interval` samples.
pub fn build_samples(
    frames: &[FrameOutput],
    window: usize,
    interval: usize,
    n_est: usize,
) -> Result<Vec<DatasetSample>> {
    let needed = window * interval;
    if frames.len() < needed || window == 0 || interval == 0 {
        return Err(Error::InsufficientHistory { needed, have: frames.len() });
    }
    let span = (window - 1) * interval;
    Ok((span..frames.len())
        .map(|n| {
            let idx: Vec<usize> = (0..window).rev().map(|k| n - k * interval).collect();
            let cur = &frames[n];
            DatasetSample {
                t: cur.t,
                t_hist: idx.iter().map(|&i| frames[i].t).collect(),
                z: idx.iter().map(|&i| path_features(&frames[i].estimate, n_est)).collect(),
                x: idx.iter().map(|&i| frames[i].position.xy).collect(),
                target: [
                    cur.truth_xy[0] - cur.position.xy[0],
                    cur.truth_xy[1] - cur.position.xy[1],
                ],
                truth: cur.truth_xy,
            }
        })
        .collect())
}

// 17 significant digits
fn num(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn array(out: &mut String, xs: &[f64]) {
    out.push('[');
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, *x);
    }
    out.push(']');
}

pub fn sample_line(s: &DatasetSample) -> String {
    let mut out = String::from("{\"t\":");
    num(&mut out, s.t);
    out.push_str(",\"t_hist\":");
    array(&mut out, &s.t_hist);
    out.push_str(",\"Z\":[");
    for (i, entry) in s.z.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('[');
        for (j, row) in entry.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            array(&mut out, row);
        }
        out.push(']');
    }
    out.push_str("],\"X\":[");
    for (i, xy) in s.x.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        array(&mut out, xy);
    }
    out.push_str("],\"target\":");
    array(&mut out, &s.target);
    out.push_str(",\"truth\":");
    array(&mut out, &s.truth);
    out.push('}');
    out
}

pub fn write_samples(samples: &[DatasetSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        writeln!(w, "{}", sample_line(s)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<DatasetSample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = format!("{}:{}", path.display(), n + 1);
        out.push(serde_json::from_str(&line).map_err(|e| Error::json(ctx, e))?);
    }
    Ok(out)
}

/// Counts written by [`export_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub train: usize,
    pub test: usize,
}

/// Whole trajectories are split 3:1; every fourth trajectory (ids 3, 7, …)
/// is held out.
pub fn is_test_trajectory(id: usize) -> bool {
    id % 4 == 3
}

/// Writes `train.jsonl` and `test.jsonl` under `dir`.
pub fn export_dataset(
    trajectories: &[Vec<FrameOutput>],
    window: usize,
    interval: usize,
    n_est: usize,
    dir: impl AsRef<Path>,
) -> Result<DatasetSummary> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (id, frames) in trajectories.iter().enumerate() {
        let samples = build_samples(frames, window, interval, n_est)?;
        if is_test_trajectory(id) {
            test.extend(samples);
        } else {
            train.extend(samples);
        }
    }
    write_samples(&train, dir.join("train.jsonl"))?;
    write_samples(&test, dir.join("test.jsonl"))?;
    Ok(DatasetSummary {
        train: train.len(),
        test: test.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locate::{LocalizationMode, PositionEstimate};
    use crate::signal::{PathOrder, PathParams};
    use num_complex::Complex64;

    fn frame(n: usize, perfect: bool) -> FrameOutput {
        let t = n as f64 * 0.5e-3;
        let truth = [t * 16.0, -5.25];
        let xy = if perfect { truth } else { [truth[0] + 0.1, truth[1] - 0.2] };
        let paths = (0..3)
            .map(|k| PathParams {
                gain: Complex64::from_polar(1e-5 / (k + 1) as f64, 0.3 * k as f64),
                toa: 40e-9 + k as f64 * 7e-9 + t * 1e-9,
                tdoa: 0.0,
                doa_az: 0.1 * k as f64,
                doa_el: 0.2,
                dod_az: -0.1,
                dod_el: -0.2,
                order: PathOrder::FirstOrder,
            })
            .collect();
        FrameOutput {
            index: n,
            t,
            full: n % 200 == 0,
            panel: 0,
            estimate: ChannelEstimate::from_paths(t, paths),
            position: PositionEstimate {
                xyz: [xy[0], xy[1], 1.6],
                xy,
                mode: LocalizationMode::LosGeometric,
                residual: 0.0,
                converged: true,
            },
            kf_xy: xy,
            truth_xy: truth,
            speed: [16.0, 0.0],
            search_space: 1.0,
            evaluations: 1,
        }
    }

    #[test]
    fn sample_count_and_window_timestamps() {
        let frames: Vec<_> = (0..6000).map(|n| frame(n, false)).collect();
        let samples = build_samples(&frames, 16, 25, 5).unwrap();
        assert_eq!(samples.len(), 5625);
        for s in samples.iter().step_by(97) {
            for (k, th) in s.t_hist.iter().rev().enumerate() {
                let n = (s.t / 0.5e-3).round() as usize - k * 25;
                assert_eq!(*th, frames[n].t);
            }
            assert_eq!(s.z.len(), 16);
            assert!(s.z.iter().all(|e| e.len() == 5));
            for e in &s.z {
                let live = e.iter().filter(|r| r[0] > 0.0);
                assert_eq!(live.map(|r| r[2]).fold(f64::INFINITY, f64::min), 0.0);
            }
        }
    }

    #[test]
    fn insufficient_history() {
        let frames: Vec<_> = (0..399).map(|n| frame(n, false)).collect();
        assert!(matches!(
            build_samples(&frames, 16, 25, 5),
            Err(Error::InsufficientHistory { needed: 400, have: 399 })
        ));
    }

    #[test]
    fn perfect_estimates_give_zero_targets() {
        let frames: Vec<_> = (0..400).map(|n| frame(n, true)).collect();
        let samples = build_samples(&frames, 16, 25, 5).unwrap();
        assert!(samples.iter().all(|s| s.target == [0.0, 0.0]));
    }

    #[test]
    fn export_roundtrips_and_is_byte_stable() {
        let traj: Vec<Vec<_>> = (0..4).map(|_| (0..420).map(|n| frame(n, false)).collect()).collect();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let summary = export_dataset(&traj, 16, 25, 5, &a).unwrap();
        export_dataset(&traj, 16, 25, 5, &b).unwrap();
        assert_eq!(summary, DatasetSummary { train: 3 * 45, test: 45 });
        for f in ["train.jsonl", "test.jsonl"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
        let back = read_samples(a.join("test.jsonl")).unwrap();
        assert_eq!(back, build_samples(&traj[3], 16, 25, 5).unwrap());
    }
}
