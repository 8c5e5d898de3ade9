//! Tabulated screen-intensity profiles and inverse-CDF sampling.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grating::{intensity_at_sine, peak_angles, GratingSpec};
use super::OpticsError;

/// Refinement factor of the angular grid near each diffraction order.
pub const REFINE_FACTOR: usize = 16;
/// Half-size of each refined window, in peak half-widths.
pub const REFINE_HALF_WIDTHS: f64 = 10.0;
/// Minimum number of samples across a peak's main lobe.
pub const MIN_SAMPLES_PER_PEAK: f64 = 9.0;

/// How screen coordinates relate to diffraction angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenMapping {
    /// `x = f·θ`
    #[default]
    Linear,
    /// `x = f·tan θ`
    Tangent,
}

/// Focusing optics and the tabulation window on the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreenGeometry {
    pub focal_m: f64,
    pub extent_halfwidth_m: f64,
    /// Uniform angular samples before refinement.
    pub sample_count: usize,
    pub mapping: ScreenMapping,
    /// Gaussian σ of the focused spot when the grating is removed.
    pub spot_sigma_m: f64,
}

impl Default for ScreenGeometry {
    fn default() -> Self {
        Self {
            focal_m: 4.0,
            extent_halfwidth_m: 3.0,
            sample_count: 1 << 20,
            mapping: ScreenMapping::Linear,
            spot_sigma_m: 1e-4,
        }
    }
}

impl ScreenGeometry {
    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.focal_m > 0.0 && self.focal_m.is_finite()) {
            return Err(OpticsError::InvalidGeometry(format!("focal length {}", self.focal_m)));
        }
        if !(self.extent_halfwidth_m > 0.0 && self.extent_halfwidth_m.is_finite()) {
            return Err(OpticsError::InvalidGeometry(format!(
                "extent half-width {}",
                self.extent_halfwidth_m
            )));
        }
        if self.sample_count < 2 {
            return Err(OpticsError::InvalidGeometry(format!(
                "sample_count must be >= 2, got {}",
                self.sample_count
            )));
        }
        if !(self.spot_sigma_m > 0.0 && self.spot_sigma_m.is_finite()) {
            return Err(OpticsError::InvalidGeometry(format!("spot sigma {}", self.spot_sigma_m)));
        }
        Ok(())
    }

    pub fn to_screen(&self, theta: f64) -> f64 {
        match self.mapping {
            ScreenMapping::Linear => self.focal_m * theta,
            ScreenMapping::Tangent => self.focal_m * theta.tan(),
        }
    }

    pub fn to_angle(&self, x: f64) -> f64 {
        match self.mapping {
            ScreenMapping::Linear => x / self.focal_m,
            ScreenMapping::Tangent => (x / self.focal_m).atan(),
        }
    }

    /// Largest angle reachable within the extent, capped at grazing.
    fn max_angle(&self) -> f64 {
        self.to_angle(self.extent_halfwidth_m)
            .min(std::f64::consts::FRAC_PI_2)
    }
}

/// Normalized, tabulated intensity `I(x)` on the screen.
///
/// Each sample owns a cell bounded by the midpoints to its neighbours (the
/// outermost cells end at the outermost samples); the sample's weight is
/// spread uniformly over its cell when sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityProfile {
    positions: Vec<f64>,
    weights: Vec<f64>,
    edges: Vec<f64>,
    cumulative: Vec<f64>,
    center_of_mass: f64,
    truncated: bool,
}

/// Compensated (Neumaier) summation.
pub(crate) fn stable_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl IntensityProfile {
    /// Builds a profile from raw (unnormalized) weights at strictly increasing positions.
    pub fn from_samples(positions: Vec<f64>, weights: Vec<f64>) -> Result<Self, OpticsError> {
        if positions.is_empty() {
            return Err(OpticsError::InvalidProfile("empty profile".into()));
        }
        if positions.len() != weights.len() {
            return Err(OpticsError::InvalidProfile(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(OpticsError::InvalidProfile("non-finite position".into()));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OpticsError::InvalidProfile(
                "positions must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(OpticsError::InvalidProfile(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total = stable_sum(weights.iter().copied());
        if total <= 0.0 {
            return Err(OpticsError::InvalidProfile("total weight is zero".into()));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();

        let n = positions.len();
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(positions[0]);
        edges.extend(positions.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        edges.push(positions[n - 1]);

        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for &w in &weights {
            let y = w - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            cumulative.push(sum);
        }
        // pin the last entry so that u < 1 always lands inside the table
        let last = cumulative.len() - 1;
        cumulative[last] = 1.0;

        let center_of_mass = stable_sum(positions.iter().zip(&weights).map(|(x, w)| x * w));
        Ok(Self {
            positions,
            weights,
            edges,
            cumulative,
            center_of_mass,
            truncated: false,
        })
    }

    /// Narrow Gaussian spot of standard deviation `sigma` centred at `center`.
    pub fn gaussian_spot(center: f64, sigma: f64, samples: usize) -> Result<Self, OpticsError> {
        if !(sigma > 0.0 && sigma.is_finite()) || samples < 3 {
            return Err(OpticsError::InvalidProfile(format!(
                "gaussian spot needs sigma > 0 and >= 3 samples (sigma {sigma}, samples {samples})"
            )));
        }
        let half = 6.0 * sigma;
        let step = 2.0 * half / (samples - 1) as f64;
        let positions: Vec<f64> = (0..samples).map(|i| -half + i as f64 * step).collect();
        let weights = positions
            .iter()
            .map(|x| (-0.5 * (x / sigma).powi(2)).exp())
            .collect();
        let shifted = positions.into_iter().map(|x| x + center).collect();
        Self::from_samples(shifted, weights)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn center_of_mass(&self) -> f64 {
        self.center_of_mass
    }

    /// Set when the screen extent does not reach every propagating order.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn support(&self) -> (f64, f64) {
        (self.positions[0], self.positions[self.positions.len() - 1])
    }

    pub fn total_weight(&self) -> f64 {
        stable_sum(self.weights.iter().copied())
    }

    /// Piecewise-linear CDF of the cell-uniform distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.positions.len();
        if x < self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n] {
            return 1.0;
        }
        // last edge <= x
        let i = self.edges.partition_point(|&e| e <= x) - 1;
        let i = i.min(n - 1);
        let width = self.edges[i + 1] - self.edges[i];
        let frac = if width > 0.0 {
            (x - self.edges[i]) / width
        } else {
            1.0
        };
        self.cumulative[i] + frac * self.weights[i]
    }

    /// Probability mass between two screen coordinates.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    /// Maps a uniform variate in `[0, 1)` to a screen coordinate by inverting the CDF.
    pub fn sample_position(&self, u: f64) -> f64 {
        let n = self.positions.len();
        let u = u.clamp(0.0, 1.0);
        // first cell whose upper cumulative bound exceeds u; zero-weight cells are skipped
        let i = self.cumulative[1..].partition_point(|&c| c <= u).min(n - 1);
        let w = self.weights[i];
        let frac = if w > 0.0 {
            ((u - self.cumulative[i]) / w).clamp(0.0, 1.0)
        } else {
            1.0
        };
        self.edges[i] + frac * (self.edges[i + 1] - self.edges[i])
    }

    /// The profile translated by `dx`.
    pub fn shifted(&self, dx: f64) -> Result<Self, OpticsError> {
        Self::from_samples(
            self.positions.iter().map(|x| x + dx).collect(),
            self.weights.clone(),
        )
    }

    /// The profile mirrored about `x = 0`.
    pub fn mirrored(&self) -> Result<Self, OpticsError> {
        Self::from_samples(
            self.positions.iter().rev().map(|x| -x).collect(),
            self.weights.iter().rev().copied().collect(),
        )
    }

    /// The profile with positions multiplied by `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<Self, OpticsError> {
        Self::from_samples(
            self.positions.iter().map(|x| x * k).collect(),
            self.weights.clone(),
        )
    }

    /// Writes `x_m,weight` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_m", "weight"])?;
        for (x, wt) in self.positions.iter().zip(&self.weights) {
            w.write_record([x.to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a profile written by [`IntensityProfile::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, OpticsError> {
        #[derive(Deserialize)]
        struct Row {
            x_m: f64,
            weight: f64,
        }
        let mut positions = Vec::new();
        let mut weights = Vec::new();
        let mut reader = csv::Reader::from_reader(input);
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| OpticsError::InvalidProfile(e.to_string()))?;
            positions.push(row.x_m);
            weights.push(row.weight);
        }
        Self::from_samples(positions, weights)
    }
}

/// Builds the angular sample grid: uniform, with each base interval that
/// touches a refinement window split into [`REFINE_FACTOR`] sub-intervals.
fn angular_grid(theta_max: f64, count: usize, windows: &[(f64, f64)]) -> Vec<f64> {
    let step = 2.0 * theta_max / (count - 1) as f64;
    let mut grid = Vec::with_capacity(count + windows.len() * 4096);
    for k in 0..count - 1 {
        let lo = -theta_max + k as f64 * step;
        let hi = lo + step;
        grid.push(lo);
        if windows.iter().any(|&(a, b)| hi > a && lo < b) {
            let sub = step / REFINE_FACTOR as f64;
            grid.extend((1..REFINE_FACTOR).map(|j| lo + j as f64 * sub));
        }
    }
    grid.push(theta_max);
    grid
}

/// Tabulates the grating's far-field pattern on the screen.
///
/// Each sample's weight is the relative intensity times the width of its cell
/// measured in `sin θ`, the variable in which the far field is the aperture's
/// Fourier transform; positions follow the geometry's angle-to-screen map.
pub fn screen_profile(
    grating: &GratingSpec,
    geom: &ScreenGeometry,
) -> Result<IntensityProfile, OpticsError> {
    grating.validate()?;
    geom.validate()?;
    let theta_max = geom.max_angle();
    let orders = peak_angles(grating)?;
    let in_range: Vec<_> = orders
        .iter()
        .filter(|o| o.theta_rad.abs() <= theta_max)
        .collect();
    if in_range.is_empty() {
        return Err(OpticsError::ExtentTooSmall {
            extent_m: geom.extent_halfwidth_m,
        });
    }
    let truncated = in_range.len() < orders.len();

    let base_step = 2.0 * theta_max / (geom.sample_count - 1) as f64;
    let mut windows = Vec::new();
    if grating.lines > 1 {
        for o in &in_range {
            let half = grating.peak_half_width(o.theta_rad);
            windows.push((
                o.theta_rad - REFINE_HALF_WIDTHS * half,
                o.theta_rad + REFINE_HALF_WIDTHS * half,
            ));
            let fine = base_step / REFINE_FACTOR as f64;
            let across = 2.0 * half / fine;
            if across < MIN_SAMPLES_PER_PEAK {
                return Err(OpticsError::UnderResolved {
                    order: o.order,
                    samples_across: across,
                    required: MIN_SAMPLES_PER_PEAK,
                });
            }
        }
    }

    let thetas = angular_grid(theta_max, geom.sample_count, &windows);
    let n = thetas.len();
    let sines: Vec<f64> = thetas.iter().map(|t| t.sin()).collect();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let lo = if i == 0 {
                sines[0]
            } else {
                (0.5 * (thetas[i - 1] + thetas[i])).sin()
            };
            let hi = if i == n - 1 {
                sines[n - 1]
            } else {
                (0.5 * (thetas[i] + thetas[i + 1])).sin()
            };
            intensity_at_sine(grating, sines[i]) * (hi - lo)
        })
        .collect();
    let positions = thetas.iter().map(|&t| geom.to_screen(t)).collect();
    let mut profile = IntensityProfile::from_samples(positions, weights)?;
    profile.truncated = truncated;
    Ok(profile)
}

/// Profile weight attributed to each order: the mass between the angular
/// midpoints to the neighbouring orders (`sin θ = (m ± ½)λ/p`).
pub fn order_power_fractions(
    grating: &GratingSpec,
    geom: &ScreenGeometry,
    profile: &IntensityProfile,
) -> Result<Vec<(i32, f64)>, OpticsError> {
    let step = grating.wavelength_m / grating.period_m;
    let to_x = |s: f64| geom.to_screen(s.clamp(-1.0, 1.0).asin());
    Ok(peak_angles(grating)?
        .into_iter()
        .map(|o| {
            let m = o.order as f64;
            let (lo, hi) = if grating.lines == 1 {
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                (to_x((m - 0.5) * step), to_x((m + 0.5) * step))
            };
            (o.order, profile.mass_between(lo, hi))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_geom(samples: usize) -> ScreenGeometry {
        ScreenGeometry {
            sample_count: samples,
            ..ScreenGeometry::default()
        }
    }

    #[test]
    fn weights_normalized_and_positions_increasing() {
        let p = screen_profile(&GratingSpec::default(), &small_geom(1 << 16)).unwrap();
        assert!((p.total_weight() - 1.0).abs() < 1e-12);
        assert!(p.positions().windows(2).all(|w| w[1] > w[0]));
        assert!(p.weights().iter().all(|&w| w >= 0.0));
        let cm = stable_sum(p.positions().iter().zip(p.weights()).map(|(x, w)| x * w));
        assert!((p.center_of_mass() - cm).abs() < 1e-12 * 3.0);
    }

    #[test]
    fn symmetric_config_has_centered_mass() {
        let geom = small_geom(1 << 16);
        let p = screen_profile(&GratingSpec::default(), &geom).unwrap();
        let spacing = 2.0 * geom.extent_halfwidth_m / (geom.sample_count - 1) as f64;
        assert!(p.center_of_mass().abs() < spacing);
    }

    #[test]
    fn too_few_samples_rejected() {
        let err = screen_profile(&GratingSpec::default(), &small_geom(64)).unwrap_err();
        assert!(matches!(err, OpticsError::UnderResolved { .. }), "{err}");
    }

    #[test]
    fn zero_extent_rejected() {
        let geom = ScreenGeometry {
            extent_halfwidth_m: 0.0,
            ..small_geom(1 << 12)
        };
        assert!(screen_profile(&GratingSpec::default(), &geom).is_err());
    }

    #[test]
    fn extent_short_of_lateral_peaks_sets_warning() {
        let geom = ScreenGeometry {
            extent_halfwidth_m: 1.0,
            ..small_geom(1 << 16)
        };
        let p = screen_profile(&GratingSpec::default(), &geom).unwrap();
        assert!(p.truncated());
        let full = screen_profile(&GratingSpec::default(), &small_geom(1 << 16)).unwrap();
        assert!(!full.truncated());
    }

    #[test]
    fn single_line_is_smooth_envelope() {
        let g = GratingSpec {
            lines: 1,
            ..GratingSpec::default()
        };
        let p = screen_profile(&g, &small_geom(4001)).unwrap();
        assert_eq!(p.len(), 4001);
        // envelope is monotone away from the centre: no secondary peaks
        let mid = p.len() / 2;
        let density: Vec<f64> = p.weights().to_vec();
        assert!(density[mid..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
    }

    #[test]
    fn sampling_endpoints() {
        let p = IntensityProfile::from_samples(vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]).unwrap();
        // support of the cell-uniform density is the middle cell
        assert_eq!(p.sample_position(0.0), -0.5);
        assert!((p.sample_position(1.0 - 1e-15) - 0.5).abs() < 1e-12);

        let q = IntensityProfile::from_samples(vec![-1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(q.sample_position(0.0), -1.0);
        assert!((q.sample_position(1.0 - 1e-15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_like_bin_always_returns_its_cell() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let mut ws = vec![0.0; 11];
        ws[7] = 3.0;
        let p = IntensityProfile::from_samples(xs, ws).unwrap();
        for k in 0..100 {
            let x = p.sample_position(k as f64 / 100.0);
            assert!((x - 0.7).abs() <= 0.05 + 1e-12, "{x}");
        }
    }

    #[test]
    fn cdf_is_consistent_with_sampler() {
        let p = IntensityProfile::from_samples(
            vec![0.0, 0.3, 0.4, 1.0, 2.0],
            vec![1.0, 2.0, 0.0, 4.0, 1.0],
        )
        .unwrap();
        for k in 1..100 {
            let u = k as f64 / 100.0;
            let x = p.sample_position(u);
            assert!((p.cdf(x) - u).abs() < 1e-12, "u={u} x={x}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(IntensityProfile::from_samples(vec![], vec![]).is_err());
        assert!(IntensityProfile::from_samples(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(IntensityProfile::from_samples(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(IntensityProfile::from_samples(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(IntensityProfile::from_samples(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let p = IntensityProfile::gaussian_spot(0.25, 0.01, 21).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x_m,weight\n"));
        let q = IntensityProfile::read_csv(buf.as_slice()).unwrap();
        assert_eq!(p.positions(), q.positions());
        for (a, b) in p.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }
}
