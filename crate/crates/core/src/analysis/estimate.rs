use serde::{Deserialize, Serialize};

use super::{AnalysisError, CoincidenceHistogram};

/// Bins on each side of the maximum used for the centroid cross-check.
const CENTROID_HALF_BINS: usize = 2;

/// Location of the coincidence maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    pub tau_star_ps: f64,
    pub peak_bin: usize,
    pub peak_counts: u64,
    /// Median bin count.
    pub background_level: f64,
    pub significance_sigma: f64,
    pub sub_bin_refined: bool,
    /// False when the maximum does not rise above the background.
    pub peak_detected: bool,
    /// Counting-statistics uncertainty of `tau_star_ps`.
    pub stat_uncertainty_ps: f64,
    /// Interpolation uncertainty: disagreement between the parabola vertex and
    /// the background-subtracted centroid around the peak, or the bin
    /// quantization `w/√12` when no refinement was possible.
    pub interp_uncertainty_ps: f64,
    pub bin_width_ps: u64,
}

impl DelayEstimate {
    pub fn uncertainty_ps(&self) -> f64 {
        self.stat_uncertainty_ps.hypot(self.interp_uncertainty_ps)
    }
}

fn median(values: &[u64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        0.5 * (v[n / 2 - 1] as f64 + v[n / 2] as f64)
    }
}

/// Vertex offset (in bins) of the parabola through three equally spaced points.
pub fn parabola_vertex(left: f64, center: f64, right: f64) -> Option<f64> {
    let curvature = left - 2.0 * center + right;
    if curvature >= 0.0 {
        return None;
    }
    Some(0.5 * (left - right) / curvature)
}

/// Finds the delay with the most coincidences.
///
/// Among equal maxima the bin whose centre is closest to zero wins (the
/// negative one on an exact tie). The bin centre is refined by a three-point
/// parabola when both neighbours exceed the median background.
pub fn estimate_delay(hist: &CoincidenceHistogram) -> Result<DelayEstimate, AnalysisError> {
    let n = hist.counts.len();
    if n < 3 {
        return Err(AnalysisError::TooFewBins(n));
    }
    if hist.counts.iter().all(|&c| c == 0) {
        return Err(AnalysisError::EmptyHistogram);
    }
    let peak_counts = *hist.counts.iter().max().expect("non-empty");
    let peak_bin = (0..n)
        .filter(|&k| hist.counts[k] == peak_counts)
        .min_by(|&a, &b| {
            let (ca, cb) = (hist.bin_center_ps(a), hist.bin_center_ps(b));
            ca.abs().total_cmp(&cb.abs()).then(ca.total_cmp(&cb))
        })
        .expect("maximum exists");
    let background = median(&hist.counts);
    let peak = peak_counts as f64;
    let significance = ((peak - background) / background.max(1.0).sqrt()).max(0.0);
    let w = hist.bin_width_ps as f64;
    let center = hist.bin_center_ps(peak_bin);

    let quantization = w / 12f64.sqrt();
    let mut estimate = DelayEstimate {
        tau_star_ps: center,
        peak_bin,
        peak_counts,
        background_level: background,
        significance_sigma: significance,
        sub_bin_refined: false,
        peak_detected: peak > background,
        stat_uncertainty_ps: 0.0,
        interp_uncertainty_ps: quantization,
        bin_width_ps: hist.bin_width_ps,
    };
    if peak_bin == 0 || peak_bin + 1 == n {
        return Ok(estimate);
    }
    let (a, b, c) = (
        hist.counts[peak_bin - 1] as f64,
        peak,
        hist.counts[peak_bin + 1] as f64,
    );
    if a <= background || c <= background {
        return Ok(estimate);
    }
    let Some(delta) = parabola_vertex(a, b, c) else {
        return Ok(estimate);
    };
    estimate.tau_star_ps = center + delta * w;
    estimate.sub_bin_refined = true;

    // first-order propagation of Poisson errors through the vertex formula
    let d = a - 2.0 * b + c;
    let num = a - c;
    let da = (d - num) / (2.0 * d * d);
    let db = num / (d * d);
    let dc = -(d + num) / (2.0 * d * d);
    estimate.stat_uncertainty_ps = w * (da * da * a + db * db * b + dc * dc * c).sqrt();

    let lo = peak_bin.saturating_sub(CENTROID_HALF_BINS);
    let hi = (peak_bin + CENTROID_HALF_BINS).min(n - 1);
    let (mut mass, mut moment) = (0.0, 0.0);
    for k in lo..=hi {
        let excess = (hist.counts[k] as f64 - background).max(0.0);
        mass += excess;
        moment += excess * hist.bin_center_ps(k);
    }
    estimate.interp_uncertainty_ps = if mass > 0.0 {
        (estimate.tau_star_ps - moment / mass).abs()
    } else {
        quantization
    };
    Ok(estimate)
}
