//! Simulation and analysis toolkit for a heralded single-photon experiment
//! that times detection behind a diffraction grating against a no-grating
//! calibration, to test whether wave-function reduction is instantaneous or
//! propagates along the backward light cone.

pub mod analysis;
pub mod cli;
pub mod collapse;
pub mod config;
pub mod optics;
pub mod planner;
pub mod protocol;
pub mod simkit;
pub mod units;
