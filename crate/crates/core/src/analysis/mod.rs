//! Coincidence analysis of time-tag streams: delay histograms, location of
//! the coincidence maximum, the calibrated delay comparison and the heralded
//! anticorrelation parameter.

mod alpha;
mod estimate;
mod histogram;
mod verdict;

pub use alpha::{anticorrelation_alpha, poisson_upper_limit, AlphaCounts, AlphaResult};
pub use estimate::{estimate_delay, parabola_vertex, DelayEstimate};
pub use histogram::{centered_range, correlate, CoincidenceHistogram};
pub use verdict::{delta_t_test, DeltaTReport, TestOptions, Verdict};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("{0} channel has no tags")]
    EmptyChannel(&'static str),
    #[error("{0} channel is not sorted by time")]
    Unsorted(&'static str),
    #[error("invalid binning: {0}")]
    InvalidBinning(String),
    #[error("histogram has {0} bins, need at least 3")]
    TooFewBins(usize),
    #[error("histogram has no counts")]
    EmptyHistogram,
    #[error("{which} peak significance {sigma:.2} is below the required {required}")]
    InsignificantPeak {
        which: &'static str,
        sigma: f64,
        required: f64,
    },
}
