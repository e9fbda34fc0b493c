//! Experiment orchestration, metrics and report writers.

mod metrics;
mod report;
mod run;

pub use metrics::{
    cdf_points, match_distance, match_paths, percentile, MatchedError, ANGLE_WEIGHT,
    DELAY_WEIGHT_PER_NS,
};
pub use report::{
    build_report, corrected_errors, read_predictions, read_report, run_experiment, within_bounds,
    write_cdf, write_overlay, write_report, Complexity, Counters, MethodErrors, MetricsReport,
    PathErrors, Prediction, Reference, DOA_BOUND_DEG, DOD_BOUND_DEG, PERCENTILES, TDOA_BOUND_NS,
};
pub use run::{
    generate_all, read_run_tracks, read_tracks, track_all, track_file, track_one, write_scene, write_tracks,
    RunConfig, TrackRecord,
};
