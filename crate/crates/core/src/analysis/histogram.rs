use std::io::Write;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Coincidence counts versus trial delay `τ = t_sig − t_ref`.
///
/// Bin `k` covers `[τ_min + k·w, τ_min + (k+1)·w)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub counts: Vec<u64>,
    pub total_pairs: u64,
}

/// Range with bins centred on integer multiples of the bin width, covering
/// centres from `−half_span` to `+half_span`.
pub fn centered_range(half_span_ps: i64, bin_width_ps: u64) -> Result<(i64, i64), AnalysisError> {
    let w = bin_width_ps as i64;
    if w <= 0 || w % 2 != 0 {
        return Err(AnalysisError::InvalidBinning(format!(
            "centred binning needs an even, positive bin width (got {bin_width_ps} ps)"
        )));
    }
    if half_span_ps < 0 || half_span_ps % w != 0 {
        return Err(AnalysisError::InvalidBinning(format!(
            "half span {half_span_ps} ps is not a multiple of the {w} ps bin width"
        )));
    }
    Ok((-half_span_ps - w / 2, half_span_ps + w / 2))
}

impl CoincidenceHistogram {
    pub fn empty(bin_width_ps: u64, range_ps: (i64, i64)) -> Result<Self, AnalysisError> {
        let (lo, hi) = range_ps;
        if bin_width_ps == 0 {
            return Err(AnalysisError::InvalidBinning("bin width must be positive".into()));
        }
        if hi <= lo {
            return Err(AnalysisError::InvalidBinning(format!("empty range [{lo}, {hi})")));
        }
        let span = (hi - lo) as u64;
        if !span.is_multiple_of(bin_width_ps) {
            return Err(AnalysisError::InvalidBinning(format!(
                "range span {span} ps is not a multiple of the {bin_width_ps} ps bin width"
            )));
        }
        Ok(Self {
            bin_width_ps,
            range_ps,
            counts: vec![0; (span / bin_width_ps) as usize],
            total_pairs: 0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_center_ps(&self, k: usize) -> f64 {
        self.range_ps.0 as f64 + (k as f64 + 0.5) * self.bin_width_ps as f64
    }

    /// Bin containing `tau`, if it lies inside the range.
    pub fn bin_of(&self, tau: i64) -> Option<usize> {
        let (lo, hi) = self.range_ps;
        if tau < lo || tau >= hi {
            return None;
        }
        Some(((tau - lo) as u64 / self.bin_width_ps) as usize)
    }

    /// Bin-wise sum of two histograms with identical binning.
    pub fn merge(&mut self, other: &Self) -> Result<(), AnalysisError> {
        if self.bin_width_ps != other.bin_width_ps || self.range_ps != other.range_ps {
            return Err(AnalysisError::InvalidBinning(
                "cannot merge histograms with different binning".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_pairs += other.total_pairs;
        Ok(())
    }

    /// Writes `tau_ps,counts` CSV with one row per bin centre.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau_ps", "counts"])?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([self.bin_center_ps(k).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_sorted(name: &'static str, times: &[u64]) -> Result<(), AnalysisError> {
    if times.is_empty() {
        return Err(AnalysisError::EmptyChannel(name));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(AnalysisError::Unsorted(name));
    }
    Ok(())
}

/// Histogram of all pairwise delays `t_sig − t_ref` that fall inside `range_ps`.
///
/// Both inputs must be sorted. A single forward sweep keeps a lower cursor
/// into `signal` that only ever advances, so the cost is linear in the input
/// sizes plus the number of pairs inside the range.
pub fn correlate(
    reference: &[u64],
    signal: &[u64],
    bin_width_ps: u64,
    range_ps: (i64, i64),
) -> Result<CoincidenceHistogram, AnalysisError> {
    check_sorted("reference", reference)?;
    check_sorted("signal", signal)?;
    let mut hist = CoincidenceHistogram::empty(bin_width_ps, range_ps)?;
    let (lo, hi) = range_ps;
    let mut start = 0usize;
    for &r in reference {
        let r = r as i128;
        while start < signal.len() && (signal[start] as i128) - r < lo as i128 {
            start += 1;
        }
        let mut j = start;
        while j < signal.len() {
            let tau = signal[j] as i128 - r;
            if tau >= hi as i128 {
                break;
            }
            let k = ((tau - lo as i128) as u64 / bin_width_ps) as usize;
            hist.counts[k] += 1;
            hist.total_pairs += 1;
            j += 1;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_shift_lands_in_one_bin() {
        let reference: Vec<u64> = (0..1000).map(|i| 1_000_000 + i * 997_003).collect();
        let signal: Vec<u64> = reference.iter().map(|t| t + 10_000).collect();
        let range = centered_range(50_000, 2_000).unwrap();
        let h = correlate(&reference, &signal, 2_000, range).unwrap();
        let k = h.bin_of(10_000).unwrap();
        assert_eq!(h.bin_center_ps(k), 10_000.0);
        assert_eq!(h.counts[k], 1000);
        assert_eq!(h.total_pairs, 1000);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn centered_range_layout() {
        let (lo, hi) = centered_range(50_000, 2_000).unwrap();
        assert_eq!((lo, hi), (-51_000, 51_000));
        let h = CoincidenceHistogram::empty(2_000, (lo, hi)).unwrap();
        assert_eq!(h.bins(), 51);
        assert_eq!(h.bin_center_ps(25), 0.0);
        assert!(centered_range(50_000, 3_000).is_err());
        assert!(centered_range(5_000, 2_000).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            correlate(&[], &[1], 10, (0, 100)),
            Err(AnalysisError::EmptyChannel("reference"))
        ));
        assert!(matches!(
            correlate(&[1], &[], 10, (0, 100)),
            Err(AnalysisError::EmptyChannel("signal"))
        ));
        assert!(correlate(&[1], &[1], 0, (0, 100)).is_err());
        assert!(correlate(&[1], &[1], 30, (0, 100)).is_err());
        assert!(correlate(&[1], &[1], 10, (100, 100)).is_err());
        assert!(matches!(
            correlate(&[5, 1], &[1], 10, (0, 100)),
            Err(AnalysisError::Unsorted("reference"))
        ));
    }

    #[test]
    fn range_edges_are_half_open() {
        let h = correlate(&[100], &[90, 100, 110, 120], 10, (-10, 20)).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        let h = correlate(&[100], &[89, 120], 10, (-10, 20)).unwrap();
        assert_eq!(h.total_pairs, 0);
    }

    #[test]
    fn merge_adds_binwise() {
        let mut a = correlate(&[0], &[5], 10, (0, 20)).unwrap();
        let b = correlate(&[0], &[15, 5], 10, (0, 20));
        assert!(b.is_err(), "unsorted signal must be rejected");
        let b = correlate(&[0], &[5, 15], 10, (0, 20)).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a.counts, vec![2, 1]);
        assert_eq!(a.total_pairs, 3);
        let c = CoincidenceHistogram::empty(5, (0, 20)).unwrap();
        assert!(a.merge(&c).is_err());
    }

    #[test]
    fn csv_export() {
        let h = correlate(&[0], &[0], 2_000, centered_range(2_000, 2_000).unwrap()).unwrap();
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tau_ps,counts\n-2000,0\n0,1\n2000,0\n"
        );
    }
}
