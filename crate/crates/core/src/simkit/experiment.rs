//! The two-phase observation protocol: a calibration run with the grating
//! removed (narrow spot on D2 at `x = 0`) followed by a run with the grating in
//! place and D2 moved to a lateral peak. Latencies are identical in both.

use serde::{Deserialize, Serialize};

use super::engine::{derive_seed, generate_heralds, propagate_and_detect, PropagationSetup, SimOutput};
use super::spec::{validate_detectors, ChannelOffsets, DetectorSpec, PhotonStatistics, SourceSpec};
use super::SimError;
use crate::collapse::{spread, CollapseModel, SpreadResult};
use crate::optics::{screen_profile, GratingSpec, IntensityProfile, ScreenGeometry};

/// Samples used to tabulate the focused spot without grating.
const SPOT_SAMPLES: usize = 241;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Grating removed: calibration of T₀.
    Baseline,
    /// Grating inserted: measurement of T₁.
    Grating,
}

impl Phase {
    pub fn label(&self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Grating => "grating",
        }
    }

    fn seed_label(&self) -> u64 {
        match self {
            Phase::Baseline => 1,
            Phase::Grating => 2,
        }
    }
}

/// Fully resolved inputs of a simulated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: SourceSpec,
    /// `None` means the grating is never inserted.
    pub grating: Option<GratingSpec>,
    pub screen: ScreenGeometry,
    /// Screen detectors for the grating phase; the first one is D2.
    pub detectors: Vec<DetectorSpec>,
    pub model: CollapseModel,
    pub offsets: ChannelOffsets,
    pub duration_s: f64,
    pub config_hash: String,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<Vec<String>, SimError> {
        let warnings = self.source.validate()?;
        if let Some(g) = &self.grating {
            g.validate()?;
        }
        self.screen.validate()?;
        validate_detectors(&self.detectors)?;
        self.offsets.validate()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SimError::InvalidDuration(self.duration_s));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if d.position_m.abs() > self.screen.extent_halfwidth_m {
                return Err(SimError::Inconsistent(format!(
                    "detector {i} at x = {} m lies outside the ±{} m screen",
                    d.position_m, self.screen.extent_halfwidth_m
                )));
            }
        }
        Ok(warnings)
    }

    /// Screen profile seen in the given phase.
    pub fn profile(&self, phase: Phase) -> Result<IntensityProfile, SimError> {
        match (phase, &self.grating) {
            (Phase::Grating, Some(g)) => Ok(screen_profile(g, &self.screen)?),
            (Phase::Grating, None) => Err(SimError::Inconsistent(
                "grating phase requested but no grating is configured".into(),
            )),
            (Phase::Baseline, _) => Ok(IntensityProfile::gaussian_spot(
                0.0,
                self.screen.spot_sigma_m,
                SPOT_SAMPLES,
            )?),
        }
    }

    /// Detectors active in the given phase: in the baseline only D2, moved to the spot.
    pub fn phase_detectors(&self, phase: Phase) -> Vec<DetectorSpec> {
        match phase {
            Phase::Grating => self.detectors.clone(),
            Phase::Baseline => self
                .detectors
                .first()
                .map(|d| DetectorSpec { position_m: 0.0, ..*d })
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseRun {
    pub phase: Phase,
    pub output: SimOutput,
    pub spread: SpreadResult,
    pub profile_truncated: bool,
}

/// Simulates one phase of the protocol.
pub fn simulate_phase(spec: &ExperimentSpec, phase: Phase, seed: u64) -> Result<PhaseRun, SimError> {
    spec.validate()?;
    let profile = spec.profile(phase)?;
    let spread = spread(&profile)?;
    let detectors = spec.phase_detectors(phase);
    if phase == Phase::Baseline && !spread.is_narrow(detectors[0].resolution_fwhm_s) {
        return Err(SimError::Inconsistent(format!(
            "baseline spot spread {} m is not narrow for {} s resolution",
            spread.spread_m, detectors[0].resolution_fwhm_s
        )));
    }
    let phase_seed = derive_seed(seed, phase.seed_label());
    let heralds = generate_heralds(&spec.source, spec.duration_s, phase_seed)?;
    let setup = PropagationSetup {
        source: &spec.source,
        profile: &profile,
        detectors: &detectors,
        model: spec.model,
        offsets: &spec.offsets,
    };
    let mut output = propagate_and_detect(&heralds, &setup, phase_seed)?;
    output.stream.header.seed = seed;
    output.stream.header.config_hash = spec.config_hash.clone();
    output.stream.header.phase = Some(phase.label().to_string());
    Ok(PhaseRun {
        phase,
        output,
        spread,
        profile_truncated: profile.truncated(),
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub baseline: PhaseRun,
    pub grating: PhaseRun,
    pub warnings: Vec<String>,
}

/// Runs the calibration phase and then the grating phase.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64) -> Result<ExperimentRun, SimError> {
    let mut warnings = spec.validate()?;
    if spec.grating.is_none() {
        return Err(SimError::Inconsistent(
            "the two-phase protocol needs a grating".into(),
        ));
    }
    let baseline = simulate_phase(spec, Phase::Baseline, seed)?;
    let grating = simulate_phase(spec, Phase::Grating, seed)?;
    if grating.profile_truncated {
        warnings.push("screen extent does not reach every propagating order".into());
    }
    Ok(ExperimentRun {
        baseline,
        grating,
        warnings,
    })
}

/// Long-run signal click rate of `detector` (excluding dark counts), from the
/// source rate, path efficiency, the profile weight inside the aperture and
/// the detector efficiency.
pub fn expected_detector_rate(
    source: &SourceSpec,
    profile: &IntensityProfile,
    detector: &DetectorSpec,
) -> f64 {
    let half = 0.5 * detector.aperture_m;
    let captured = profile.mass_between(detector.position_m - half, detector.position_m + half);
    let per_photon = source.path_efficiency * captured * detector.efficiency;
    match source.statistics {
        PhotonStatistics::Fock1 => source.herald_rate_hz * per_photon,
        PhotonStatistics::Coherent { mean_photon_number } => {
            source.herald_rate_hz * (1.0 - (-mean_photon_number * per_photon).exp())
        }
    }
}
