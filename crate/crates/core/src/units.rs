//! Physical constants and time-unit conversions.

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub const PS_PER_S: f64 = 1e12;

/// Seconds to the nearest whole picosecond.
pub fn seconds_to_ps(t: f64) -> i64 {
    (t * PS_PER_S).round() as i64
}

pub fn ps_to_seconds(t: i64) -> f64 {
    t as f64 / PS_PER_S
}

pub fn ps_to_ns(t: f64) -> f64 {
    t * 1e-3
}

/// FWHM of a Gaussian in units of its standard deviation, `2·sqrt(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
