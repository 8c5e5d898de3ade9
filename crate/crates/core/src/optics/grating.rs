//! Fraunhofer multi-slit intensity and diffraction-order geometry.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::OpticsError;

/// Arguments closer than this to a removable singularity use the series branch.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Transmission grating illuminated over `lines` periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GratingSpec {
    /// Grating period `p` in metres.
    pub period_m: f64,
    /// Width `a` of each transmitting aperture in metres.
    pub aperture_m: f64,
    /// Number of illuminated apertures `N`.
    pub lines: u32,
    /// Wavelength in metres.
    pub wavelength_m: f64,
}

impl Default for GratingSpec {
    /// Symmetric 800 lines/mm grating, 800 nm light, 2000 illuminated lines.
    fn default() -> Self {
        let period = 1e-3 / 800.0;
        Self {
            period_m: period,
            aperture_m: period / 2.0,
            lines: 2000,
            wavelength_m: 800e-9,
        }
    }
}

/// One propagating diffraction order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffractionOrder {
    pub order: i32,
    pub theta_rad: f64,
}

impl GratingSpec {
    pub fn validate(&self) -> Result<(), OpticsError> {
        let finite = self.period_m.is_finite()
            && self.aperture_m.is_finite()
            && self.wavelength_m.is_finite();
        if !finite || self.aperture_m <= 0.0 || self.aperture_m > self.period_m {
            return Err(OpticsError::InvalidGrating(format!(
                "need 0 < aperture ({}) <= period ({})",
                self.aperture_m, self.period_m
            )));
        }
        if self.lines == 0 {
            return Err(OpticsError::InvalidGrating("lines must be >= 1".into()));
        }
        if self.wavelength_m <= 0.0 {
            return Err(OpticsError::InvalidGrating(format!(
                "wavelength must be positive, got {}",
                self.wavelength_m
            )));
        }
        Ok(())
    }

    /// Angular half-width (centre to first null) of the order at `theta`.
    pub fn peak_half_width(&self, theta: f64) -> f64 {
        self.wavelength_m / (self.lines as f64 * self.period_m * theta.cos())
    }
}

/// `sin(x)/x` with the removable singularity at zero handled by its series.
pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < SERIES_THRESHOLD {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `sin²(Nγ) / (N² sin²γ)`, evaluated after reducing γ to its nearest multiple of π.
///
/// With `δ = γ − kπ` the ratio equals `(sinc(Nδ)/sinc(δ))²`, which stays well
/// conditioned at and around every principal maximum.
fn grating_factor(lines: u32, gamma: f64) -> f64 {
    let k = (gamma / PI).round();
    let delta = gamma - k * PI;
    let ratio = sinc(lines as f64 * delta) / sinc(delta);
    ratio * ratio
}

/// Evaluates the normalized multi-slit intensity at a given `sin θ`.
pub(crate) fn intensity_at_sine(grating: &GratingSpec, sin_theta: f64) -> f64 {
    let scale = PI * sin_theta / grating.wavelength_m;
    let beta = scale * grating.aperture_m;
    let gamma = scale * grating.period_m;
    let envelope = sinc(beta);
    envelope * envelope * grating_factor(grating.lines, gamma)
}

/// Relative far-field intensity of the grating at angle `theta`, with `I(0) = 1`.
pub fn relative_intensity(grating: &GratingSpec, theta: f64) -> Result<f64, OpticsError> {
    grating.validate()?;
    let s = theta.sin();
    // sin() is bounded, so only non-finite angles can land here; guard anyway
    // for callers that pass angles from a sine computed elsewhere.
    if !s.is_finite() || s.abs() > 1.0 {
        return Err(OpticsError::NonPropagating { sin_theta: s });
    }
    Ok(intensity_at_sine(grating, s))
}

/// Same as [`relative_intensity`] but parameterized directly by the direction
/// sine, which is where a value above one means an evanescent direction.
pub fn relative_intensity_sine(grating: &GratingSpec, sin_theta: f64) -> Result<f64, OpticsError> {
    grating.validate()?;
    if !sin_theta.is_finite() || sin_theta.abs() > 1.0 {
        return Err(OpticsError::NonPropagating { sin_theta });
    }
    Ok(intensity_at_sine(grating, sin_theta))
}

/// All propagating orders with a non-vanishing aperture factor, ascending in `m`.
///
/// A single illuminated line has no grating orders, so only `m = 0` is returned.
pub fn peak_angles(grating: &GratingSpec) -> Result<Vec<DiffractionOrder>, OpticsError> {
    grating.validate()?;
    if grating.lines == 1 {
        return Ok(vec![DiffractionOrder {
            order: 0,
            theta_rad: 0.0,
        }]);
    }
    let step = grating.wavelength_m / grating.period_m;
    let max_order = (1.0 / step).floor() as i32;
    let mut orders = Vec::new();
    for m in -max_order..=max_order {
        let s = m as f64 * step;
        if s.abs() > 1.0 {
            continue;
        }
        // aperture factor vanishes where a·m/p is a nonzero integer
        let ratio = grating.aperture_m * m as f64 / grating.period_m;
        if m != 0 && (ratio - ratio.round()).abs() < 1e-9 {
            continue;
        }
        orders.push(DiffractionOrder {
            order: m,
            theta_rad: s.asin(),
        });
    }
    Ok(orders)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_maximum_is_one() {
        let g = GratingSpec::default();
        assert_eq!(relative_intensity(&g, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn first_order_height_is_four_over_pi_squared() {
        let g = GratingSpec::default();
        let theta = (g.wavelength_m / g.period_m).asin();
        let i = relative_intensity(&g, theta).unwrap();
        assert!((i - 4.0 / (PI * PI)).abs() < 1e-12, "{i}");
    }

    #[test]
    fn first_null_next_to_central_peak() {
        let g = GratingSpec::default();
        let s = g.wavelength_m / (g.lines as f64 * g.period_m);
        let i = relative_intensity_sine(&g, s).unwrap();
        assert!(i < 1e-20, "{i}");
    }

    #[test]
    fn series_branch_matches_direct_branch_across_threshold() {
        let g = GratingSpec::default();
        let s1 = g.wavelength_m / g.period_m;
        // Δs giving δ = eps in γ
        let to_ds = |eps: f64| eps * g.wavelength_m / (PI * g.period_m);
        for side in [-1.0, 1.0] {
            let below = relative_intensity_sine(&g, s1 + side * to_ds(0.999e-6)).unwrap();
            let above = relative_intensity_sine(&g, s1 + side * to_ds(1.001e-6)).unwrap();
            assert!((below - above).abs() < 1e-8, "{below} vs {above}");
            assert!((below - 4.0 / (PI * PI)).abs() < 1e-5);
        }
        assert!((sinc(0.999e-6) - sinc(1.001e-6)).abs() < 1e-12);
    }

    #[test]
    fn evanescent_direction_rejected() {
        let g = GratingSpec::default();
        assert!(matches!(
            relative_intensity_sine(&g, 1.28),
            Err(OpticsError::NonPropagating { .. })
        ));
        assert!(relative_intensity(&g, f64::NAN).is_err());
    }

    #[test]
    fn invalid_gratings_rejected() {
        let mut g = GratingSpec::default();
        g.aperture_m = g.period_m * 1.5;
        assert!(relative_intensity(&g, 0.1).is_err());
        let mut g = GratingSpec::default();
        g.lines = 0;
        assert!(peak_angles(&g).is_err());
        let mut g = GratingSpec::default();
        g.wavelength_m = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn reference_grating_orders() {
        let orders = peak_angles(&GratingSpec::default()).unwrap();
        let ms: Vec<i32> = orders.iter().map(|o| o.order).collect();
        assert_eq!(ms, vec![-1, 0, 1]);
        assert!((orders[2].theta_rad - 0.64f64.asin()).abs() < 1e-15);
        assert!((orders[2].theta_rad - 0.694).abs() < 1e-3);
        assert_eq!(orders[1].theta_rad, 0.0);
    }

    #[test]
    fn even_orders_suppressed_for_half_duty_cycle() {
        // long wavelength-to-period ratio small enough that m = ±2, ±4 propagate
        let g = GratingSpec {
            period_m: 10e-6,
            aperture_m: 5e-6,
            lines: 100,
            wavelength_m: 1e-6,
        };
        let ms: Vec<i32> = peak_angles(&g).unwrap().iter().map(|o| o.order).collect();
        assert_eq!(ms, vec![-9, -7, -5, -3, -1, 0, 1, 3, 5, 7, 9]);
    }

    #[test]
    fn single_line_has_only_zeroth_order() {
        let g = GratingSpec {
            lines: 1,
            ..GratingSpec::default()
        };
        let orders = peak_angles(&g).unwrap();
        assert_eq!(orders.len(), 1);
        assert_eq!(orders[0].order, 0);
        // grating factor is identically one: only the sinc² envelope remains
        let s = 0.64;
        let beta = PI * g.aperture_m * s / g.wavelength_m;
        let env = (beta.sin() / beta).powi(2);
        assert!((relative_intensity_sine(&g, s).unwrap() - env).abs() < 1e-14);
    }
}
