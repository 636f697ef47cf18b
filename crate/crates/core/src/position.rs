//! Joint and conditional position distributions on the y-cut, and the
//! z-independent conditional momentum width.

use statrs::function::erf::erfc;

use crate::distribution::{JointDistribution2D, UniformGrid};
use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::params::{beam_widths, BeamWidths, ExperimentParams};
use crate::uncertainty::{Method, UncertaintyEstimate, Unit};

/// Default number of grid points per axis.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Default half-width of the grid in units of max(w_z, σ_z).
pub const DEFAULT_GRID_SPAN: f64 = 4.0;
/// Largest probability mass allowed outside a position grid.
pub const MAX_TRUNCATED_MASS: f64 = 1e-6;

/// Default symmetric grid for distance `z`.
pub fn default_position_grid(widths: &BeamWidths) -> UniformGrid {
    let half = DEFAULT_GRID_SPAN * widths.w_z.max(widths.sigma_z);
    UniformGrid::symmetric(half, DEFAULT_GRID_POINTS).expect("positive span")
}

fn mass_outside(grid: &UniformGrid, sd: f64) -> f64 {
    let tail = |x: f64| 0.5 * erfc(x / (sd * std::f64::consts::SQRT_2));
    tail(-grid.start()) + tail(grid.end())
}

/// Max-normalized P(y_s, y_i; z) on the y-cut (x integrated out). `axes`
/// defaults to [`default_position_grid`] on both axes.
pub fn joint_position_pd(
    params: &ExperimentParams,
    z: f64,
    axes: Option<(UniformGrid, UniformGrid)>,
) -> Result<JointDistribution2D> {
    let widths = beam_widths(params, z)?;
    let (a1, a2) = axes.unwrap_or_else(|| {
        let g = default_position_grid(&widths);
        (g, g)
    });
    let sd = widths.marginal_sigma();
    let outside = mass_outside(&a1, sd) + mass_outside(&a2, sd);
    if outside > MAX_TRUNCATED_MASS {
        return Err(Error::GridTruncation {
            mass_outside: outside,
        });
    }
    let sum_coef = 0.5 / (widths.w_z * widths.w_z);
    let diff_coef = 0.5 / (widths.sigma_z * widths.sigma_z);
    let mut values = Vec::with_capacity(a1.len() * a2.len());
    for ys in a1.values() {
        for yi in a2.values() {
            let s = ys + yi;
            let d = ys - yi;
            values.push((-(sum_coef * s * s) - diff_coef * d * d).exp());
        }
    }
    Ok(JointDistribution2D::new(a1, a2, values)?.max_normalize())
}

/// Standard deviation of P(y_s | y_i = 0; z): w(z)σ(z)/√(w(z)²+σ(z)²).
pub fn conditional_position_sigma(
    params: &ExperimentParams,
    z: f64,
) -> Result<UncertaintyEstimate> {
    let widths = beam_widths(params, z)?;
    Ok(UncertaintyEstimate::new(
        widths.conditional_sigma(),
        Unit::Length,
        Method::Analytic,
        Some(z),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// w(z) ≫ σ(z): the conditional width follows σ(z).
    Near,
    /// w(z) ≪ σ(z): the conditional width follows w(z).
    Far,
    /// w(z)/σ(z) within a factor of two of one.
    Crossover,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRegime {
    pub regime: Regime,
    /// σ(z) in the near field, w(z) in the far field, the smaller of the two
    /// at the crossover.
    pub law_value: f64,
    /// Exact conditional standard deviation for comparison.
    pub exact: f64,
    /// w(z)/σ(z).
    pub ratio: f64,
}

pub fn position_scaling_regime(params: &ExperimentParams, z: f64) -> Result<ScalingRegime> {
    let widths = beam_widths(params, z)?;
    let ratio = widths.w_z / widths.sigma_z;
    let regime = if ratio >= 2.0 {
        Regime::Near
    } else if ratio <= 0.5 {
        Regime::Far
    } else {
        Regime::Crossover
    };
    let law_value = match regime {
        Regime::Near => widths.sigma_z,
        Regime::Far => widths.w_z,
        Regime::Crossover => widths.w_z.min(widths.sigma_z),
    };
    Ok(ScalingRegime {
        regime,
        law_value,
        exact: widths.conditional_sigma(),
        ratio,
    })
}

/// Δ(p_sy | p_iy) = ħ/√(w0²+σ0²), independent of z.
pub fn conditional_momentum_sigma(params: &ExperimentParams) -> UncertaintyEstimate {
    let value = 1.0 / params.w0().hypot(params.sigma0());
    UncertaintyEstimate::new(value, Unit::HbarPerLength, Method::Analytic, None)
}

/// Momentum width from a conditional width measured in the Fourier plane of
/// a lens with focal length `focal_length`: camera_sigma · k/f (in ħ/m).
pub fn momentum_sigma_from_fourier_plane(
    camera_sigma: f64,
    focal_length: f64,
    params: &ExperimentParams,
) -> Result<UncertaintyEstimate> {
    require_non_negative("camera_sigma", camera_sigma)?;
    require_positive("focal_length", focal_length)?;
    Ok(UncertaintyEstimate::new(
        camera_sigma * params.k() / focal_length,
        Unit::HbarPerLength,
        Method::Analytic,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_params;
    use approx::assert_relative_eq;

    fn paper() -> ExperimentParams {
        ExperimentParams::paper()
    }

    /// Standard deviation of a sampled 1-D profile by numerical moments.
    fn slice_sd(grid: &UniformGrid, values: &[f64]) -> f64 {
        let total: f64 = values.iter().sum();
        let mean: f64 = grid.values().zip(values).map(|(x, v)| x * v).sum::<f64>() / total;
        let var: f64 = grid
            .values()
            .zip(values)
            .map(|(x, v)| (x - mean).powi(2) * v)
            .sum::<f64>()
            / total;
        var.sqrt()
    }

    #[test]
    fn analytic_matches_slice_moments() {
        let p = paper();
        for z in [0.0, 1e-3, 1e-2, 0.5] {
            let w = beam_widths(&p, z).unwrap();
            let analytic = conditional_position_sigma(&p, z).unwrap().value;
            let half = DEFAULT_GRID_SPAN * w.w_z.max(w.sigma_z);
            // y_s resolves the conditional width; y_i holds 0 at index 256.
            let n = (2.0 * half / (analytic / 10.0)).ceil() as usize | 1;
            let a1 = UniformGrid::symmetric(half, n).unwrap();
            let a2 = UniformGrid::symmetric(half, 513).unwrap();
            let pd = joint_position_pd(&p, z, Some((a1, a2))).unwrap();
            let sd = slice_sd(&a1, &pd.column(256));
            assert!(
                (sd / analytic - 1.0).abs() < 5e-3,
                "z={z}: {sd} vs {analytic}"
            );
        }
    }

    #[test]
    fn near_field_correlation_and_far_field_anticorrelation() {
        let p = paper();
        let near = joint_position_pd(&p, 1e-3, {
            let g = UniformGrid::symmetric(2.5e-3, 501).unwrap();
            Some((g, g))
        })
        .unwrap();
        let j0 = 250;
        let col = near.column(j0);
        let argmax = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 250);

        let far = joint_position_pd(&p, 0.5, None).unwrap();
        let j_star = 300; // y_i > 0
        assert!(far.axis2.value(j_star) > 0.0);
        let col = far.column(j_star);
        let argmax = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(far.axis1.value(argmax) < 0.0);
    }

    #[test]
    fn swap_symmetry_and_normalization() {
        let p = paper();
        for z in [0.0, 0.02, 0.4] {
            let pd = joint_position_pd(&p, z, None).unwrap();
            let n = pd.axis1.len();
            let mut worst = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((pd.get(i, j) - pd.get(j, i)).abs());
                }
            }
            assert!(worst < 1e-12);
            assert!((pd.max() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_grid_is_flagged() {
        let p = paper();
        let g = UniformGrid::symmetric(100e-6, 64).unwrap();
        assert!(matches!(
            joint_position_pd(&p, 0.0, Some((g, g))),
            Err(Error::GridTruncation { .. })
        ));
    }

    #[test]
    fn conditional_sigma_limits_and_monotonicity() {
        let p = paper();
        let at0 = conditional_position_sigma(&p, 0.0).unwrap().value;
        let w0 = p.w0();
        let s0 = p.sigma0();
        assert_relative_eq!(
            at0,
            w0 * s0 / (w0 * w0 + s0 * s0).sqrt(),
            max_relative = 1e-12
        );
        assert!((at0 - 11.3e-6).abs() < 0.1e-6);

        let far = 20.0 * p.pump_range();
        let w = beam_widths(&p, far).unwrap();
        let ratio = conditional_position_sigma(&p, far).unwrap().value / w.w_z;
        assert!((ratio - 1.0).abs() < 1e-3);

        let mut prev = at0;
        for i in 1..200 {
            let v = conditional_position_sigma(&p, i as f64 * 5e-3)
                .unwrap()
                .value;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn regimes() {
        let p = paper();
        let near = position_scaling_regime(&p, 1e-3).unwrap();
        assert_eq!(near.regime, Regime::Near);
        assert!((near.exact / near.law_value - 1.0).abs() < 0.01);
        let far = position_scaling_regime(&p, 5.0).unwrap();
        assert_eq!(far.regime, Regime::Far);
        assert!((far.exact / far.law_value - 1.0).abs() < 0.01);
        let cross = position_scaling_regime(&p, p.crossover_distance()).unwrap();
        assert_eq!(cross.regime, Regime::Crossover);
        assert!((cross.ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn momentum_width() {
        let p = paper();
        let m = conditional_momentum_sigma(&p);
        assert_eq!(m.unit, Unit::HbarPerLength);
        // 1.97 ħ/mm
        assert!((m.value * 1e-3 / 1.97 - 1.0).abs() < 5e-3, "{}", m.value);
        let thin = derive_params(507e-6, 1e-30, 355e-9).unwrap();
        assert_relative_eq!(
            conditional_momentum_sigma(&thin).value,
            1.0 / 507e-6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fourier_plane_conversion() {
        let p = paper();
        assert_eq!(
            momentum_sigma_from_fourier_plane(0.0, 0.1, &p)
                .unwrap()
                .value,
            0.0
        );
        // camera width giving 1.97 ħ/mm behind a 100 mm lens: 1970·0.1/k
        let cam = 1970.0 * 0.1 / p.k();
        assert!((cam - 22.3e-6).abs() < 0.05e-6);
        let v = momentum_sigma_from_fourier_plane(cam, 0.1, &p)
            .unwrap()
            .value;
        assert_relative_eq!(v, 1970.0, max_relative = 1e-12);
        let half = momentum_sigma_from_fourier_plane(cam, 0.2, &p)
            .unwrap()
            .value;
        assert_relative_eq!(half, v / 2.0, max_relative = 1e-12);
        assert!(momentum_sigma_from_fourier_plane(cam, 0.0, &p).is_err());
    }
}
