//! Joint mmWave channel tracking and vehicle localization.

pub mod dict;
pub mod error;
pub mod estimate;
pub mod harness;
pub mod locate;
pub mod momp;
pub mod pipeline;
pub mod scene;
pub mod signal;

pub use error::{Error, Result};
pub use estimate::ChannelEstimate;
