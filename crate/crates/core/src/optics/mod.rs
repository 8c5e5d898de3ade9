//! Far-field diffraction of a transmission grating and the resulting screen profile.

mod grating;
mod profile;

pub use grating::{peak_angles, relative_intensity, relative_intensity_sine, DiffractionOrder, GratingSpec};
pub use profile::{
    order_power_fractions, screen_profile, IntensityProfile, ScreenGeometry, ScreenMapping,
    MIN_SAMPLES_PER_PEAK, REFINE_FACTOR, REFINE_HALF_WIDTHS,
};

pub(crate) use profile::stable_sum;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid grating: {0}")]
    InvalidGrating(String),
    #[error("invalid screen geometry: {0}")]
    InvalidGeometry(String),
    #[error("direction with sin(theta) = {sin_theta} does not propagate")]
    NonPropagating { sin_theta: f64 },
    #[error("screen extent {extent_m} m contains no diffraction peak")]
    ExtentTooSmall { extent_m: f64 },
    #[error("order {order} is covered by {samples_across:.1} samples, need at least {required}")]
    UnderResolved {
        order: i32,
        samples_across: f64,
        required: f64,
    },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}
