use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Source rate above which avalanche-detector echoes start to jam the herald channel.
pub const ECHO_RATE_CEILING_HZ: f64 = 1e5;

/// Photon-number statistics of each heralded slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhotonStatistics {
    /// Exactly one photon per herald.
    Fock1,
    /// Poisson-distributed photon number with the given mean.
    Coherent { mean_photon_number: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSpec {
    pub herald_rate_hz: f64,
    /// Probability that a heralded photon reaches the screen plane.
    pub path_efficiency: f64,
    pub statistics: PhotonStatistics,
    /// Herald rates above this produce a warning rather than an error.
    pub rate_cap_hz: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            herald_rate_hz: 1e5,
            path_efficiency: 0.25,
            statistics: PhotonStatistics::Fock1,
            rate_cap_hz: ECHO_RATE_CEILING_HZ,
        }
    }
}

impl SourceSpec {
    /// Validates the source and returns any non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, SimError> {
        if !(self.herald_rate_hz > 0.0 && self.herald_rate_hz.is_finite()) {
            return Err(SimError::InvalidSource(format!(
                "herald rate must be positive, got {}",
                self.herald_rate_hz
            )));
        }
        if !(0.0..=1.0).contains(&self.path_efficiency) {
            return Err(SimError::InvalidSource(format!(
                "path efficiency {} outside [0, 1]",
                self.path_efficiency
            )));
        }
        if let PhotonStatistics::Coherent { mean_photon_number } = self.statistics {
            if !(mean_photon_number > 0.0 && mean_photon_number.is_finite()) {
                return Err(SimError::InvalidSource(format!(
                    "coherent mean photon number must be positive, got {mean_photon_number}"
                )));
            }
        }
        let mut warnings = Vec::new();
        if self.herald_rate_hz > self.rate_cap_hz {
            warnings.push(format!(
                "herald rate {:.3e}/s exceeds the {:.1e}/s echo-jamming ceiling",
                self.herald_rate_hz, self.rate_cap_hz
            ));
        }
        Ok(warnings)
    }
}

/// Avalanche photodiode placed on the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorSpec {
    pub position_m: f64,
    /// Collecting diameter; acceptance is the interval `position ± aperture/2`.
    pub aperture_m: f64,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub resolution_fwhm_s: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_mean_delay_s: f64,
    pub dead_time_s: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            position_m: 0.0,
            aperture_m: 5e-3,
            efficiency: 0.7,
            dark_rate_hz: 100.0,
            resolution_fwhm_s: 2e-9,
            afterpulse_prob: 1e-3,
            afterpulse_mean_delay_s: 50e-9,
            dead_time_s: 50e-9,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| Err(SimError::InvalidDetector(format!("{what} = {v}")));
        if !self.position_m.is_finite() {
            return bad("position_m", self.position_m);
        }
        if !(self.aperture_m > 0.0 && self.aperture_m.is_finite()) {
            return bad("aperture_m", self.aperture_m);
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return bad("efficiency", self.efficiency);
        }
        if !(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite()) {
            return bad("dark_rate_hz", self.dark_rate_hz);
        }
        if !(self.resolution_fwhm_s > 0.0 && self.resolution_fwhm_s.is_finite()) {
            return bad("resolution_fwhm_s", self.resolution_fwhm_s);
        }
        if !(0.0..1.0).contains(&self.afterpulse_prob) {
            return bad("afterpulse_prob", self.afterpulse_prob);
        }
        if !(self.afterpulse_mean_delay_s > 0.0 && self.afterpulse_mean_delay_s.is_finite()) {
            return bad("afterpulse_mean_delay_s", self.afterpulse_mean_delay_s);
        }
        if !(self.dead_time_s >= 0.0 && self.dead_time_s.is_finite()) {
            return bad("dead_time_s", self.dead_time_s);
        }
        Ok(())
    }

    pub fn covers(&self, x: f64) -> bool {
        (x - self.position_m).abs() <= 0.5 * self.aperture_m
    }

    /// Ideal detector used to isolate individual effects in tests.
    pub fn ideal(position_m: f64, aperture_m: f64) -> Self {
        Self {
            position_m,
            aperture_m,
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            resolution_fwhm_s: 1e-12,
            afterpulse_prob: 0.0,
            afterpulse_mean_delay_s: 50e-9,
            dead_time_s: 0.0,
        }
    }
}

/// Fixed per-channel latency in seconds (cables, fibres, free-space flight,
/// detector response). Channels without an entry have zero latency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelOffsets(pub BTreeMap<u8, f64>);

impl ChannelOffsets {
    pub fn get(&self, channel: u8) -> f64 {
        self.0.get(&channel).copied().unwrap_or(0.0)
    }

    pub fn with(mut self, channel: u8, offset_s: f64) -> Self {
        self.0.insert(channel, offset_s);
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (&ch, &v) in &self.0 {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidOffset { channel: ch, value: v });
            }
        }
        Ok(())
    }
}

/// Rejects empty detector lists and overlapping acceptance intervals.
pub fn validate_detectors(detectors: &[DetectorSpec]) -> Result<(), SimError> {
    if detectors.is_empty() {
        return Err(SimError::NoDetectors);
    }
    if detectors.len() > (u8::MAX - super::FIRST_SCREEN_CHANNEL) as usize + 1 {
        return Err(SimError::InvalidDetector(format!(
            "{} detectors exceed the channel id space",
            detectors.len()
        )));
    }
    for d in detectors {
        d.validate()?;
    }
    for (i, a) in detectors.iter().enumerate() {
        for (j, b) in detectors.iter().enumerate().skip(i + 1) {
            let gap = (a.position_m - b.position_m).abs();
            if gap < 0.5 * (a.aperture_m + b.aperture_m) {
                return Err(SimError::OverlappingApertures { first: i, second: j });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_source_is_valid_and_quiet() {
        assert!(SourceSpec::default().validate().unwrap().is_empty());
    }

    #[test]
    fn rate_above_cap_warns() {
        let s = SourceSpec {
            herald_rate_hz: 2e5,
            ..SourceSpec::default()
        };
        assert_eq!(s.validate().unwrap().len(), 1);
    }

    #[test]
    fn bad_sources_rejected() {
        for s in [
            SourceSpec { herald_rate_hz: 0.0, ..SourceSpec::default() },
            SourceSpec { path_efficiency: 1.5, ..SourceSpec::default() },
            SourceSpec {
                statistics: PhotonStatistics::Coherent { mean_photon_number: 0.0 },
                ..SourceSpec::default()
            },
        ] {
            assert!(s.validate().is_err(), "{s:?}");
        }
    }

    #[test]
    fn overlapping_and_empty_detectors_rejected() {
        assert!(matches!(validate_detectors(&[]), Err(SimError::NoDetectors)));
        let a = DetectorSpec { position_m: 0.0, ..DetectorSpec::default() };
        let b = DetectorSpec { position_m: 0.004, ..DetectorSpec::default() };
        assert!(matches!(
            validate_detectors(&[a, b]),
            Err(SimError::OverlappingApertures { first: 0, second: 1 })
        ));
        let c = DetectorSpec { position_m: 0.005, ..DetectorSpec::default() };
        assert!(validate_detectors(&[a, c]).is_ok());
    }

    #[test]
    fn detector_ranges_checked() {
        let d = DetectorSpec { afterpulse_prob: 1.0, ..DetectorSpec::default() };
        assert!(d.validate().is_err());
        let d = DetectorSpec { resolution_fwhm_s: 0.0, ..DetectorSpec::default() };
        assert!(d.validate().is_err());
        let d = DetectorSpec { dark_rate_hz: -1.0, ..DetectorSpec::default() };
        assert!(d.validate().is_err());
    }

    #[test]
    fn offsets_serialize_as_string_keyed_map() {
        let o = ChannelOffsets::default().with(1, 0.0).with(2, 20e-9);
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(s, r#"{"1":0.0,"2":2e-8}"#);
        let back: ChannelOffsets = serde_json::from_str(&s).unwrap();
        assert_eq!(back, o);
        assert_eq!(back.get(9), 0.0);
        assert!(ChannelOffsets::default().with(2, -1e-9).validate().is_err());
    }
}
