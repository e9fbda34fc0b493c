//! Geometric channel synthesis and hybrid-beamformed training measurements.

mod array;
pub mod beams;
mod channel;
mod measure;
mod waveform;

pub use array::{
    angles_from_cones, angles_from_unit, axis_factor, cone_angles, kron, steering_vector,
    unit_vector, wrap_angle, ArrayGeometry,
};
pub use channel::{channel_taps, check_in_window, ChannelTensor, PathOrder, PathParams};
pub use measure::{measure, measure_paths, pilot_convolve, BeamformerSet, MeasurementBatch};
pub use waveform::{
    dbm_to_watts, delay_response, raised_cosine, WaveformConfig, DELAY_GUARD_TAPS,
    SPEED_OF_LIGHT,
};
