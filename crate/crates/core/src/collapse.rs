//! Spread functional of a screen profile and the two collapse hypotheses.
//!
//! The spread is the intensity-weighted mean absolute distance from the
//! profile's centre of mass. Under covariant (light-cone) reduction a state of
//! spread `s` is observed `s/c` later than a narrow one; under instantaneous
//! collapse the delay is zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{stable_sum, IntensityProfile};
use crate::units::{seconds_to_ps, SPEED_OF_LIGHT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollapseError {
    #[error("profile is empty")]
    EmptyProfile,
    #[error("profile weights sum to {0}, expected 1")]
    Unnormalized(f64),
    #[error("profile centre of mass is not finite")]
    NonFiniteCenter,
}

/// Result of the spread functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadResult {
    pub spread_m: f64,
    pub delay_s: f64,
}

impl SpreadResult {
    fn from_spread(spread_m: f64) -> Self {
        Self {
            spread_m,
            delay_s: spread_m / SPEED_OF_LIGHT,
        }
    }

    pub fn delay_ns(&self) -> f64 {
        self.delay_s * 1e9
    }

    /// Whether the profile counts as narrow for a detector of the given time
    /// resolution, i.e. its width (taken as twice the spread) is below `c·resolution`.
    pub fn is_narrow(&self, resolution_s: f64) -> bool {
        2.0 * self.spread_m < SPEED_OF_LIGHT * resolution_s
    }
}

/// Competing hypotheses for when a spread-out photon is registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseModel {
    /// Standard reduction: no profile-dependent delay.
    #[default]
    Instantaneous,
    /// Reduction along the past light cone: delay equal to spread / c.
    HellwigKraus,
}

/// Mean absolute distance of the profile weight from its centre of mass.
pub fn spread(profile: &IntensityProfile) -> Result<SpreadResult, CollapseError> {
    if profile.is_empty() {
        return Err(CollapseError::EmptyProfile);
    }
    let total = profile.total_weight();
    if (total - 1.0).abs() > 1e-12 {
        return Err(CollapseError::Unnormalized(total));
    }
    let cm = profile.center_of_mass();
    if !cm.is_finite() {
        return Err(CollapseError::NonFiniteCenter);
    }
    let s = stable_sum(
        profile
            .positions()
            .iter()
            .zip(profile.weights())
            .map(|(x, w)| (x - cm).abs() * w),
    );
    Ok(SpreadResult::from_spread(s))
}

/// Detection delay the model assigns to every photon drawn from `profile`.
pub fn detection_delay(model: CollapseModel, profile: &IntensityProfile) -> Result<f64, CollapseError> {
    match model {
        CollapseModel::Instantaneous => Ok(0.0),
        CollapseModel::HellwigKraus => Ok(spread(profile)?.delay_s),
    }
}

/// [`detection_delay`] rounded to whole picoseconds.
pub fn detection_delay_ps(model: CollapseModel, profile: &IntensityProfile) -> Result<i64, CollapseError> {
    detection_delay(model, profile).map(seconds_to_ps)
}

/// Spread of three equally narrow peaks at `{−q, 0, +q}` with lateral weight
/// `4/π²` relative to the centre: `8q/(π² + 8)`.
pub fn three_peak_spread_coefficient() -> f64 {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    8.0 / (pi2 + 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn profile(xs: &[f64], ws: &[f64]) -> IntensityProfile {
        IntensityProfile::from_samples(xs.to_vec(), ws.to_vec()).unwrap()
    }

    #[test]
    fn two_equal_peaks_give_half_separation() {
        let q = 3.0;
        let r = spread(&profile(&[-q / 2.0, q / 2.0], &[0.5, 0.5])).unwrap();
        assert_eq!(r.spread_m, q / 2.0);
        assert!((r.delay_s - q / (2.0 * SPEED_OF_LIGHT)).abs() < 1e-24);
        let hk = detection_delay(CollapseModel::HellwigKraus, &profile(&[-1.5, 1.5], &[1.0, 1.0])).unwrap();
        assert!((hk * 1e9 - 5.003_461).abs() < 1e-5, "{hk}");
    }

    #[test]
    fn single_peak_has_zero_spread() {
        for x0 in [-2.0, 0.0, 7.5] {
            let r = spread(&profile(&[x0 - 1.0, x0, x0 + 1.0], &[0.0, 1.0, 0.0])).unwrap();
            assert_eq!(r.spread_m, 0.0);
        }
    }

    #[test]
    fn three_peak_coefficient() {
        let q = 2.0;
        let lat = 4.0 / (PI * PI);
        let r = spread(&profile(&[-q, 0.0, q], &[lat, 1.0, lat])).unwrap();
        assert!((r.spread_m - three_peak_spread_coefficient() * q).abs() < 1e-14);
        assert!((three_peak_spread_coefficient() - 0.448).abs() < 5e-4);
    }

    #[test]
    fn gaussian_spread_against_quadrature() {
        // independent trapezoid quadrature of ∫|x|e^{-x²/σ²} / ∫e^{-x²/σ²}
        let sigma = 0.37;
        let n = 200_001;
        let h = 16.0 * sigma / (n - 1) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let x = -8.0 * sigma + i as f64 * h;
            let wt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let g = (-(x / sigma).powi(2)).exp();
            num += wt * x.abs() * g;
            den += wt * g;
        }
        let quad = num / den;
        assert!((quad - sigma / PI.sqrt()).abs() < 1e-9);

        let xs: Vec<f64> = (0..20_001).map(|i| -8.0 * sigma + i as f64 * 16.0 * sigma / 20_000.0).collect();
        let ws: Vec<f64> = xs.iter().map(|x| (-(x / sigma).powi(2)).exp()).collect();
        let r = spread(&profile(&xs, &ws)).unwrap();
        // the kink of |x| at 0 limits the coarser grid to O(h²)
        let h_coarse = xs[1] - xs[0];
        assert!((r.spread_m - quad).abs() < h_coarse * h_coarse, "{} vs {}", r.spread_m, quad);
    }

    #[test]
    fn instantaneous_is_always_zero() {
        let p = profile(&[-10.0, 3.0, 40.0], &[1.0, 2.0, 3.0]);
        assert_eq!(detection_delay(CollapseModel::Instantaneous, &p).unwrap(), 0.0);
        assert_eq!(detection_delay_ps(CollapseModel::Instantaneous, &p).unwrap(), 0);
    }

    #[test]
    fn narrowness_uses_resolution() {
        let narrow = SpreadResult::from_spread(0.1);
        let wide = SpreadResult::from_spread(0.5);
        assert!(narrow.is_narrow(2e-9));
        assert!(!wide.is_narrow(2e-9));
    }
}
