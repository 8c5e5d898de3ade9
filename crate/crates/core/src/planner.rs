//! Count-rate feasibility arithmetic for the slit and grating layouts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkit::ECHO_RATE_CEILING_HZ;

/// Grating-peak count rate quoted alongside the factor product, for comparison.
pub const QUOTED_GRATING_RATE_HZ: f64 = 2e4;

/// Fraction of the echo ceiling above which a rate counts as near the limit.
pub const NEAR_CEILING_FRACTION: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{name} = {value} is outside {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

fn probability(name: &'static str, value: f64) -> Result<f64, PlanError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(PlanError::OutOfRange {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, PlanError> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PlanError::OutOfRange {
            name,
            value,
            expected: "[0, ∞)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBudget {
    pub source_rate_hz: f64,
    pub path_efficiency: f64,
    pub geometric_acceptance: f64,
    pub detector_efficiency: f64,
    pub expected_rate_hz: f64,
    pub dark_rate_hz: f64,
    /// `expected / dark`; `None` without dark counts.
    pub snr: Option<f64>,
    /// Externally quoted rate for the same scenario, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quoted_rate_hz: Option<f64>,
}

impl RateBudget {
    fn new(
        source_rate_hz: f64,
        path_efficiency: f64,
        geometric_acceptance: f64,
        detector_efficiency: f64,
        dark_rate_hz: f64,
    ) -> Self {
        let expected = source_rate_hz * path_efficiency * geometric_acceptance * detector_efficiency;
        Self {
            source_rate_hz,
            path_efficiency,
            geometric_acceptance,
            detector_efficiency,
            expected_rate_hz: expected,
            dark_rate_hz,
            snr: (dark_rate_hz > 0.0).then(|| expected / dark_rate_hz),
            quoted_rate_hz: None,
        }
    }

    pub fn below_dark_rate(&self) -> bool {
        self.expected_rate_hz < self.dark_rate_hz
    }
}

/// Single-aperture layout: the detector intercepts `diameter / spread` of the
/// diffracted light (a one-dimensional ratio).
pub fn budget_slit(
    source_rate_hz: f64,
    path_efficiency: f64,
    detector_diameter_m: f64,
    spread_extent_m: f64,
    detector_efficiency: f64,
    dark_rate_hz: f64,
) -> Result<RateBudget, PlanError> {
    if !(spread_extent_m > 0.0 && spread_extent_m.is_finite()) {
        return Err(PlanError::OutOfRange {
            name: "spread_extent_m",
            value: spread_extent_m,
            expected: "(0, ∞)",
        });
    }
    let diameter = non_negative("detector_diameter_m", detector_diameter_m)?;
    let acceptance = probability("geometric_acceptance", diameter / spread_extent_m)?;
    Ok(RateBudget::new(
        non_negative("source_rate_hz", source_rate_hz)?,
        probability("path_efficiency", path_efficiency)?,
        acceptance,
        probability("detector_efficiency", detector_efficiency)?,
        non_negative("dark_rate_hz", dark_rate_hz)?,
    ))
}

/// Grating layout: a lateral peak focused onto the detector, so the
/// acceptance is the peak's share of the diffracted power.
pub fn budget_grating(
    source_rate_hz: f64,
    path_efficiency: f64,
    peak_power_fraction: f64,
    detector_efficiency: f64,
    dark_rate_hz: f64,
) -> Result<RateBudget, PlanError> {
    let mut b = RateBudget::new(
        non_negative("source_rate_hz", source_rate_hz)?,
        probability("path_efficiency", path_efficiency)?,
        probability("peak_power_fraction", peak_power_fraction)?,
        probability("detector_efficiency", detector_efficiency)?,
        non_negative("dark_rate_hz", dark_rate_hz)?,
    );
    b.quoted_rate_hz = Some(QUOTED_GRATING_RATE_HZ);
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoRisk {
    Acceptable,
    /// Within a factor of two below the ceiling, or exactly at it.
    AtLimit,
    JammingRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoAdvisory {
    pub requested_rate_hz: f64,
    pub ceiling_hz: f64,
    pub risk: EchoRisk,
}

/// Classifies a herald rate against the afterpulse ("echo") ceiling.
pub fn echo_ceiling(requested_rate_hz: f64) -> Result<EchoAdvisory, PlanError> {
    let rate = non_negative("requested_rate_hz", requested_rate_hz)?;
    let risk = if rate > ECHO_RATE_CEILING_HZ {
        EchoRisk::JammingRisk
    } else if rate >= NEAR_CEILING_FRACTION * ECHO_RATE_CEILING_HZ {
        EchoRisk::AtLimit
    } else {
        EchoRisk::Acceptable
    };
    Ok(EchoAdvisory {
        requested_rate_hz: rate,
        ceiling_hz: ECHO_RATE_CEILING_HZ,
        risk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slit_budget_is_below_dark_counts() {
        let b = budget_slit(1e5, 0.25, 5e-3, 3.0, 0.7, 100.0).unwrap();
        assert!((b.expected_rate_hz - 29.1667).abs() < 1e-3);
        assert!(b.snr.unwrap() < 1.0);
        assert!(b.below_dark_rate());
    }

    #[test]
    fn slit_edge_cases() {
        assert_eq!(budget_slit(1e5, 0.0, 5e-3, 3.0, 0.7, 100.0).unwrap().expected_rate_hz, 0.0);
        assert_eq!(budget_slit(1e5, 0.25, 3.0, 3.0, 0.7, 100.0).unwrap().geometric_acceptance, 1.0);
        assert!(budget_slit(1e5, 0.25, 5e-3, 0.0, 0.7, 100.0).is_err());
        assert!(budget_slit(1e5, 0.25, 4.0, 3.0, 0.7, 100.0).is_err());
    }

    #[test]
    fn grating_budget() {
        let b = budget_grating(1e5, 0.25, 0.224, 0.7, 100.0).unwrap();
        assert!((b.expected_rate_hz - 3920.0).abs() < 1e-9);
        assert!((b.snr.unwrap() - 39.2).abs() < 1e-9);
        assert_eq!(b.quoted_rate_hz, Some(2e4));
        let b = budget_grating(1e5, 0.25, 0.2, 0.7, 100.0).unwrap();
        assert!((b.expected_rate_hz - 3500.0).abs() < 1e-9);
        assert_eq!(budget_grating(0.0, 0.25, 0.2, 0.7, 100.0).unwrap().expected_rate_hz, 0.0);
        assert!(budget_grating(1e5, 0.25, 1.2, 0.7, 100.0).is_err());
        assert_eq!(budget_grating(1e5, 0.25, 0.2, 0.7, 0.0).unwrap().snr, None);
    }

    #[test]
    fn echo_classes() {
        assert_eq!(echo_ceiling(1e5).unwrap().risk, EchoRisk::AtLimit);
        assert_eq!(echo_ceiling(1e3).unwrap().risk, EchoRisk::Acceptable);
        assert_eq!(echo_ceiling(1e6).unwrap().risk, EchoRisk::JammingRisk);
        assert!(echo_ceiling(-1.0).is_err());
    }

    #[test]
    fn full_aperture_slit_equals_unit_fraction_grating() {
        let s = budget_slit(1e5, 0.25, 3.0, 3.0, 0.7, 100.0).unwrap();
        let g = budget_grating(1e5, 0.25, 1.0, 0.7, 100.0).unwrap();
        assert_eq!(s.expected_rate_hz, g.expected_rate_hz);
    }
}
