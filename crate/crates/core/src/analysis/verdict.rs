use serde::{Deserialize, Serialize};

use super::{AnalysisError, DelayEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestOptions {
    /// Both peaks must reach this significance.
    pub min_significance: f64,
    /// Width of the acceptance bands, in combined standard deviations.
    pub band_sigma: f64,
    /// Timing floor added in quadrature to each estimate's uncertainty.
    pub timing_floor_ps: f64,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            min_significance: 5.0,
            band_sigma: 2.0,
            timing_floor_ps: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `T₁ − T₀` reaches the predicted light-cone delay.
    DelayedConsistent,
    /// `T₁ − T₀` is compatible with zero.
    InstantaneousConsistent,
    Inconclusive,
}

/// Outcome of comparing the calibration and grating delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTReport {
    pub t0_ps: f64,
    pub t1_ps: f64,
    pub delta_t_ps: f64,
    pub sigma_delta_t_ps: f64,
    pub predicted_delay_ps: f64,
    /// `ΔT` must be at least this for the delayed hypothesis.
    pub delayed_threshold_ps: f64,
    /// `|ΔT|` must be at most this for the instantaneous hypothesis.
    pub instantaneous_band_ps: f64,
    pub options: TestOptions,
    /// Distance of `ΔT` from zero in units of its uncertainty.
    pub z_from_instantaneous: f64,
    /// Distance of `ΔT` from the predicted delay in units of its uncertainty.
    pub z_from_delayed: f64,
    pub verdict: Verdict,
}

/// Compares the calibration (T₀) and grating (T₁) delay estimates against the
/// predicted covariant-reduction delay.
pub fn delta_t_test(
    baseline: &DelayEstimate,
    grating: &DelayEstimate,
    predicted_delay_ps: f64,
    options: &TestOptions,
) -> Result<DeltaTReport, AnalysisError> {
    for (which, e) in [("baseline", baseline), ("grating", grating)] {
        if !e.peak_detected || e.significance_sigma < options.min_significance {
            return Err(AnalysisError::InsignificantPeak {
                which,
                sigma: e.significance_sigma,
                required: options.min_significance,
            });
        }
    }
    let floor = options.timing_floor_ps;
    let s0 = baseline.uncertainty_ps().hypot(floor);
    let s1 = grating.uncertainty_ps().hypot(floor);
    let sigma = s0.hypot(s1);
    let delta = grating.tau_star_ps - baseline.tau_star_ps;
    let k = options.band_sigma;
    let delayed_threshold = predicted_delay_ps - k * sigma;
    let band = k * sigma;
    let delayed = delta >= delayed_threshold;
    let instantaneous = delta.abs() <= band;
    let verdict = match (delayed, instantaneous) {
        (true, false) => Verdict::DelayedConsistent,
        (false, true) => Verdict::InstantaneousConsistent,
        _ => Verdict::Inconclusive,
    };
    Ok(DeltaTReport {
        t0_ps: baseline.tau_star_ps,
        t1_ps: grating.tau_star_ps,
        delta_t_ps: delta,
        sigma_delta_t_ps: sigma,
        predicted_delay_ps,
        delayed_threshold_ps: delayed_threshold,
        instantaneous_band_ps: band,
        options: *options,
        z_from_instantaneous: delta.abs() / sigma,
        z_from_delayed: (predicted_delay_ps - delta).abs() / sigma,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(tau_ps: f64, sigma_ps: f64) -> DelayEstimate {
        DelayEstimate {
            tau_star_ps: tau_ps,
            peak_bin: 0,
            peak_counts: 1000,
            background_level: 10.0,
            significance_sigma: 100.0,
            sub_bin_refined: true,
            peak_detected: true,
            stat_uncertainty_ps: sigma_ps,
            interp_uncertainty_ps: 0.0,
            bin_width_ps: 2000,
        }
    }

    fn no_floor() -> TestOptions {
        TestOptions {
            timing_floor_ps: 0.0,
            ..TestOptions::default()
        }
    }

    /// Two estimates whose difference has the given combined uncertainty.
    fn pair(delta_ps: f64, sigma_ps: f64) -> (DelayEstimate, DelayEstimate) {
        let s = sigma_ps / 2f64.sqrt();
        (est(20_000.0, s), est(20_000.0 + delta_ps, s))
    }

    #[test]
    fn verdicts() {
        let cases = [
            (4_100.0, Verdict::DelayedConsistent),
            (0.0, Verdict::InstantaneousConsistent),
            (2_000.0, Verdict::Inconclusive),
        ];
        for (delta, expected) in cases {
            let (b, g) = pair(delta, 300.0);
            let r = delta_t_test(&b, &g, 4_150.0, &no_floor()).unwrap();
            assert_eq!(r.verdict, expected, "{delta}");
            assert!((r.sigma_delta_t_ps - 300.0).abs() < 1e-9);
            assert!((r.delayed_threshold_ps - 3_550.0).abs() < 1e-9);
            assert!((r.instantaneous_band_ps - 600.0).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_bands_are_inconclusive() {
        let (b, g) = pair(2_000.0, 2_000.0);
        let r = delta_t_test(&b, &g, 4_150.0, &no_floor()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn insignificant_peak_rejected() {
        let (mut b, g) = pair(0.0, 300.0);
        b.significance_sigma = 3.0;
        assert!(matches!(
            delta_t_test(&b, &g, 4_150.0, &TestOptions::default()),
            Err(AnalysisError::InsignificantPeak { which: "baseline", .. })
        ));
    }

    #[test]
    fn common_offset_cancels() {
        for shift in [-7_777.0, 0.0, 123_456.0] {
            let (mut b, mut g) = pair(4_100.0, 300.0);
            b.tau_star_ps += shift;
            g.tau_star_ps += shift;
            let r = delta_t_test(&b, &g, 4_150.0, &no_floor()).unwrap();
            assert_eq!(r.verdict, Verdict::DelayedConsistent);
            assert!((r.delta_t_ps - 4_100.0).abs() < 1e-6);
        }
    }

    #[test]
    fn floor_enters_in_quadrature() {
        let b = est(0.0, 0.0);
        let g = est(0.0, 0.0);
        let r = delta_t_test(&b, &g, 4_150.0, &TestOptions::default()).unwrap();
        assert!((r.sigma_delta_t_ps - 10.0 * 2f64.sqrt()).abs() < 1e-12);
    }
}
