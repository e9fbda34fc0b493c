//! Per-frame channel and position tracking.

mod classify;
mod dataset;
mod kf;

pub use classify::{classify_paths, ClassifyContext};
pub use dataset::{
    build_samples, export_dataset, is_test_trajectory, path_features, read_samples, sample_line,
    write_samples, DatasetSample, DatasetSummary, PATH_FEATURES,
};
pub use kf::{kf_update, KfParams, KfState};
mod tracker;

pub use tracker::{
    estimate_frame, track_trajectory, tracking_beams, window_origin, FrameOutput, HistorySource, Tracker,
    TrackerState, TrackingConfig,
};
