use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaCounts {
    pub heralds: u64,
    pub a: u64,
    pub b: u64,
    pub ab: u64,
}

/// Heralded anticorrelation parameter `α = N_AB·N_H / (N_A·N_B)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    /// `None` when `N_A·N_B = 0`.
    pub alpha: Option<f64>,
    /// α computed with the 95% Poisson upper limit on `N_AB`.
    pub alpha_upper_95: Option<f64>,
    /// Poisson error of α from the `N_AB` count alone.
    pub alpha_sigma: Option<f64>,
    pub counts: AlphaCounts,
    pub window_ps: u64,
}

/// One-sided Poisson upper limit on a mean given `observed` events.
pub fn poisson_upper_limit(observed: u64, confidence: f64) -> f64 {
    let dof = 2.0 * (observed as f64 + 1.0);
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    0.5 * chi.inverse_cdf(confidence)
}

/// Marks, for every herald, whether `channel` has a tag within
/// `herald + offset ± window/2` (inclusive).
fn mark_hits(heralds: &[u64], channel: &[u64], offset_ps: i64, half_window: i64) -> Vec<bool> {
    let mut marks = Vec::with_capacity(heralds.len());
    let mut j = 0usize;
    for &h in heralds {
        let lo = h as i128 + offset_ps as i128 - half_window as i128;
        let hi = h as i128 + offset_ps as i128 + half_window as i128;
        while j < channel.len() && (channel[j] as i128) < lo {
            j += 1;
        }
        marks.push(j < channel.len() && (channel[j] as i128) <= hi);
    }
    marks
}

/// Counts heralds followed by a click in A, in B and in both, each channel
/// looked for around its own delay relative to the herald.
pub fn anticorrelation_alpha(
    heralds: &[u64],
    a: &[u64],
    b: &[u64],
    window_ps: u64,
    offset_a_ps: i64,
    offset_b_ps: i64,
) -> Result<AlphaResult, AnalysisError> {
    if heralds.is_empty() {
        return Err(AnalysisError::EmptyChannel("heralds"));
    }
    if window_ps == 0 {
        return Err(AnalysisError::InvalidBinning("coincidence window must be positive".into()));
    }
    for (name, s) in [("heralds", heralds), ("A", a), ("B", b)] {
        if s.windows(2).any(|w| w[1] < w[0]) {
            return Err(AnalysisError::Unsorted(name));
        }
    }
    let half = (window_ps / 2) as i64;
    let in_a = mark_hits(heralds, a, offset_a_ps, half);
    let in_b = mark_hits(heralds, b, offset_b_ps, half);
    let counts = AlphaCounts {
        heralds: heralds.len() as u64,
        a: in_a.iter().filter(|&&x| x).count() as u64,
        b: in_b.iter().filter(|&&x| x).count() as u64,
        ab: in_a.iter().zip(&in_b).filter(|(x, y)| **x && **y).count() as u64,
    };
    let norm = counts.a as f64 * counts.b as f64;
    let scale = (norm > 0.0).then(|| counts.heralds as f64 / norm);
    Ok(AlphaResult {
        alpha: scale.map(|s| s * counts.ab as f64),
        alpha_upper_95: scale.map(|s| s * poisson_upper_limit(counts.ab, 0.95)),
        alpha_sigma: scale.map(|s| s * (counts.ab as f64).sqrt()),
        counts,
        window_ps,
    })
}
