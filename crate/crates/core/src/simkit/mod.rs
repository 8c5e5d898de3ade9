//! Monte Carlo model of the heralded source, the screen detectors and the
//! time-to-digital converter output.

mod engine;
mod experiment;
mod spec;
mod tags;

pub use engine::{
    derive_seed, generate_heralds, propagate_and_detect, ChannelStats, PropagationSetup,
    SimDiagnostics, SimOutput,
};
pub use experiment::{
    expected_detector_rate, run_experiment, simulate_phase, ExperimentRun, ExperimentSpec, Phase,
    PhaseRun,
};
pub use spec::{
    validate_detectors, ChannelOffsets, DetectorSpec, PhotonStatistics, SourceSpec,
    ECHO_RATE_CEILING_HZ,
};
pub use tags::{StreamHeader, TagFormat, TagFormatError, TagStream, TimeTag, MAGIC};

use thiserror::Error;

use crate::collapse::CollapseError;
use crate::optics::OpticsError;

/// Channel of the herald detector D1.
pub const HERALD_CHANNEL: u8 = 1;
/// Screen detectors D2, D3, ... occupy consecutive channels from here.
pub const FIRST_SCREEN_CHANNEL: u8 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("run duration must be positive and finite, got {0} s")]
    InvalidDuration(f64),
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("invalid detector: {0}")]
    InvalidDetector(String),
    #[error("no screen detectors configured")]
    NoDetectors,
    #[error("detectors {first} and {second} have overlapping apertures")]
    OverlappingApertures { first: usize, second: usize },
    #[error("channel {channel} has invalid latency {value} s")]
    InvalidOffset { channel: u8, value: f64 },
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Collapse(#[from] CollapseError),
}
