//! Analysis of simulated or recorded runs: one histogram and delay estimate
//! per phase, the delay comparison and the anticorrelation parameter.

use serde::{Deserialize, Serialize};

use crate::analysis::{
    anticorrelation_alpha, centered_range, correlate, delta_t_test, estimate_delay, AlphaResult,
    AnalysisError, CoincidenceHistogram, DelayEstimate, DeltaTReport, TestOptions, Verdict,
};
use crate::config::AnalysisSection;
use crate::simkit::{ExperimentRun, TagStream, FIRST_SCREEN_CHANNEL, HERALD_CHANNEL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamAnalysis {
    pub reference_channel: u8,
    pub signal_channel: u8,
    pub histogram: CoincidenceHistogram,
    pub estimate: DelayEstimate,
}

/// Why a delay comparison could not be made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowStatistics {
    pub baseline_significance: f64,
    pub grating_significance: f64,
    pub required: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<DeltaTReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_statistics: Option<LowStatistics>,
}

/// Histograms and locates the reference→signal coincidence peak.
pub fn analyze_stream(
    stream: &TagStream,
    reference: u8,
    signal: u8,
    settings: &AnalysisSection,
) -> Result<StreamAnalysis, AnalysisError> {
    let range = centered_range(settings.half_range_ps(), settings.bin_width_ps())?;
    let r = stream.channel(reference);
    let s = stream.channel(signal);
    if r.is_empty() {
        return Err(AnalysisError::EmptyChannel("reference"));
    }
    if s.is_empty() {
        return Err(AnalysisError::EmptyChannel("signal"));
    }
    let histogram = correlate(&r, &s, settings.bin_width_ps(), range)?;
    let estimate = estimate_delay(&histogram)?;
    Ok(StreamAnalysis {
        reference_channel: reference,
        signal_channel: signal,
        histogram,
        estimate,
    })
}

/// Like [`analyze_stream`], but an empty channel or histogram yields an
/// undetected peak instead of an error, so that short runs still produce a
/// low-statistics verdict.
pub fn analyze_stream_lenient(
    stream: &TagStream,
    reference: u8,
    signal: u8,
    settings: &AnalysisSection,
) -> Result<StreamAnalysis, AnalysisError> {
    match analyze_stream(stream, reference, signal, settings) {
        Err(AnalysisError::EmptyChannel(_) | AnalysisError::EmptyHistogram) => {}
        other => return other,
    }
    let range = centered_range(settings.half_range_ps(), settings.bin_width_ps())?;
    let r = stream.channel(reference);
    let s = stream.channel(signal);
    let histogram = if r.is_empty() || s.is_empty() {
        CoincidenceHistogram::empty(settings.bin_width_ps(), range)?
    } else {
        correlate(&r, &s, settings.bin_width_ps(), range)?
    };
    let zero_bin = histogram.bin_of(0).unwrap_or(0);
    let w = histogram.bin_width_ps as f64;
    let estimate = DelayEstimate {
        tau_star_ps: histogram.bin_center_ps(zero_bin),
        peak_bin: zero_bin,
        peak_counts: 0,
        background_level: 0.0,
        significance_sigma: 0.0,
        sub_bin_refined: false,
        peak_detected: false,
        stat_uncertainty_ps: 0.0,
        interp_uncertainty_ps: w / 12f64.sqrt(),
        bin_width_ps: histogram.bin_width_ps,
    };
    Ok(StreamAnalysis {
        reference_channel: reference,
        signal_channel: signal,
        histogram,
        estimate,
    })
}

/// Runs the delay comparison, turning insignificant peaks into an
/// inconclusive outcome with diagnostics.
pub fn compare(
    baseline: &DelayEstimate,
    grating: &DelayEstimate,
    predicted_delay_ps: f64,
    options: &TestOptions,
) -> Result<Comparison, AnalysisError> {
    match delta_t_test(baseline, grating, predicted_delay_ps, options) {
        Ok(report) => Ok(Comparison {
            verdict: report.verdict,
            delta_t: Some(report),
            low_statistics: None,
        }),
        Err(AnalysisError::InsignificantPeak { which, sigma, required }) => Ok(Comparison {
            verdict: Verdict::Inconclusive,
            delta_t: None,
            low_statistics: Some(LowStatistics {
                baseline_significance: baseline.significance_sigma,
                grating_significance: grating.significance_sigma,
                required,
                message: format!("{which} peak reaches {sigma:.2} sigma, {required} required"),
            }),
        }),
        Err(e) => Err(e),
    }
}

/// Anticorrelation between two screen channels, each window centred on the
/// channel's own herald delay as located by its coincidence peak.
pub fn alpha_for(
    stream: &TagStream,
    a: u8,
    b: u8,
    settings: &AnalysisSection,
) -> Result<AlphaResult, AnalysisError> {
    let heralds = stream.channel(HERALD_CHANNEL);
    let locate = |ch: u8| -> Result<i64, AnalysisError> {
        let sa = analyze_stream(stream, HERALD_CHANNEL, ch, settings)?;
        Ok(sa.estimate.tau_star_ps.round() as i64)
    };
    let (da, db) = (locate(a)?, locate(b)?);
    anticorrelation_alpha(
        &heralds,
        &stream.channel(a),
        &stream.channel(b),
        settings.window_ps(),
        da,
        db,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentAnalysis {
    pub baseline: StreamAnalysis,
    pub grating: StreamAnalysis,
    pub predicted_delay_ps: f64,
    pub comparison: Comparison,
    /// Present when the grating phase has at least two screen detectors.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaResult>,
}

/// Analyzes both phases of a simulated run. The prediction is the light-cone
/// delay of the grating profile, whatever model generated the data.
pub fn analyze_experiment(
    run: &ExperimentRun,
    settings: &AnalysisSection,
) -> Result<ExperimentAnalysis, AnalysisError> {
    let (r, s) = (settings.reference_channel, settings.signal_channel);
    let baseline = analyze_stream_lenient(&run.baseline.output.stream, r, s, settings)?;
    let grating = analyze_stream_lenient(&run.grating.output.stream, r, s, settings)?;
    let predicted_delay_ps = run.grating.spread.delay_s * 1e12;
    let comparison = compare(&baseline.estimate, &grating.estimate, predicted_delay_ps, &settings.test)?;
    let stream = &run.grating.output.stream;
    let second = FIRST_SCREEN_CHANNEL + 1;
    let alpha = if stream.header.channels.contains(&second) {
        match alpha_for(stream, FIRST_SCREEN_CHANNEL, second, settings) {
            Ok(a) => Some(a),
            Err(AnalysisError::EmptyChannel(_) | AnalysisError::EmptyHistogram) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(ExperimentAnalysis {
        baseline,
        grating,
        predicted_delay_ps,
        comparison,
        alpha,
    })
}
