//! Two-photon angle distributions.
//!
//! The joint angle density is the polar marginal of the transverse position
//! density,
//!
//! ```text
//! P(θs, θi; z) = ∬ rs ri exp[-C(rs² + ri²) - 2D cos(θs-θi) rs ri] drs dri
//! C = (1/w² + 1/σ²)/2,   D = (1/w² - 1/σ²)/2
//! ```
//!
//! evaluated with a composite midpoint rule on `[0, 5·max(w, σ)]²`, refined
//! by doubling until stable. The equal-radius approximation reduces it to
//! `P0 / (C + D cos Δθ)^{3/2}`, which is used for peak location and for the
//! half-maximum width laws.

use std::f64::consts::PI;

use crate::distribution::{JointDistribution2D, UniformGrid};
use crate::error::{require_non_negative, Error, Result};
use crate::params::{beam_widths, BeamWidths, ExperimentParams};
use crate::stats::circular_sd_about_peak;
use crate::uncertainty::{Method, UncertaintyEstimate, Unit};

pub const MIN_THETA_POINTS: usize = 64;
pub const MIN_RADIAL_POINTS: usize = 128;
pub const DEFAULT_THETA_POINTS: usize = 256;
/// Radial domain in units of max(w, σ).
pub const RADIAL_SPAN: f64 = 5.0;
/// Largest change (relative to the peak) allowed when n_radial doubles.
pub const REFINEMENT_TOLERANCE: f64 = 1e-3;
const MAX_RADIAL_POINTS: usize = 16_384;

/// 2^{2/3}, the half-maximum level of a −3/2 power law.
fn half_max_level() -> f64 {
    2f64.powf(2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleKernelCoeffs {
    pub p0: f64,
    pub c: f64,
    /// Negative in the near field (σ < w), positive in the far field.
    pub d: f64,
    pub z: f64,
}

impl AngleKernelCoeffs {
    pub fn from_widths(widths: &BeamWidths) -> Self {
        let iw = 1.0 / (widths.w_z * widths.w_z);
        let is = 1.0 / (widths.sigma_z * widths.sigma_z);
        Self {
            p0: (PI / 2.0).sqrt() / 8.0,
            c: 0.5 * (iw + is),
            d: 0.5 * (iw - is),
            z: widths.z,
        }
    }

    /// Δθ of the closed-form maximum: 0 when D < 0, π when D > 0.
    pub fn peak(&self) -> f64 {
        if self.d > 0.0 {
            PI
        } else {
            0.0
        }
    }
}

pub fn angle_kernel_coeffs(params: &ExperimentParams, z: f64) -> Result<AngleKernelCoeffs> {
    Ok(AngleKernelCoeffs::from_widths(&beam_widths(params, z)?))
}

/// Equal-radius joint angle density `P0 / (C + D cos Δθ)^{3/2}`.
pub fn joint_angle_pd_closed_form(coeffs: &AngleKernelCoeffs, delta_theta: f64) -> Result<f64> {
    let denom = coeffs.c + coeffs.d * delta_theta.cos();
    if !(denom > 0.0) {
        return Err(Error::NonPositiveDenominator { value: denom });
    }
    Ok(coeffs.p0 / denom.powf(1.5))
}

/// Midpoint-rule value of ∬ rs ri exp[-C(rs²+ri²) - β rs ri] on `[0, r_max]²`.
///
/// For each rs the integrand is a Gaussian in ri centred at −β·rs/(2C) with
/// width 1/√(2C); cells farther than 7/√C from that centre contribute less
/// than e^{-49} of the row maximum and are skipped.
pub(crate) fn radial_double_integral(c: f64, beta: f64, r_max: f64, n: usize) -> f64 {
    let h = r_max / n as f64;
    let reach = 7.0 / c.sqrt();
    let mut total = 0.0;
    for j in 0..n {
        let rs = (j as f64 + 0.5) * h;
        let centre = -beta * rs / (2.0 * c);
        let lo = ((centre - reach) / h - 0.5).floor().max(0.0) as usize;
        let hi = (((centre + reach) / h - 0.5).ceil().max(0.0) as usize + 1).min(n);
        if lo >= hi {
            continue;
        }
        let base = -c * rs * rs;
        let mut row = 0.0;
        for l in lo..hi {
            let ri = (l as f64 + 0.5) * h;
            row += ri * (base - c * ri * ri - beta * rs * ri).exp();
        }
        total += rs * row;
    }
    total * h * h
}

/// Radial quadrature settings for one set of widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialQuadrature {
    pub coeffs: AngleKernelCoeffs,
    pub r_max: f64,
    pub n_radial: usize,
}

impl RadialQuadrature {
    pub fn new(widths: &BeamWidths, n_radial: usize) -> Self {
        Self {
            coeffs: AngleKernelCoeffs::from_widths(widths),
            r_max: RADIAL_SPAN * widths.w_z.max(widths.sigma_z),
            n_radial,
        }
    }

    /// Starting resolution: enough cells to put about eight across the
    /// narrower of the two widths.
    pub fn auto(widths: &BeamWidths) -> Self {
        let ratio = widths.w_z.max(widths.sigma_z) / widths.w_z.min(widths.sigma_z);
        let n = ((8.0 * RADIAL_SPAN * ratio / 5.0).ceil() as usize).next_power_of_two();
        Self::new(widths, n.clamp(MIN_RADIAL_POINTS, MAX_RADIAL_POINTS))
    }

    /// Unnormalized joint angle density at angle difference `delta_theta`.
    pub fn density(&self, delta_theta: f64) -> f64 {
        self.density_cos(delta_theta.cos())
    }

    fn density_cos(&self, cos_delta: f64) -> f64 {
        radial_double_integral(
            self.coeffs.c,
            2.0 * self.coeffs.d * cos_delta,
            self.r_max,
            self.n_radial,
        )
    }

    fn doubled(&self) -> Self {
        Self {
            n_radial: self.n_radial * 2,
            ..*self
        }
    }
}

/// Slice `P(θs, θi = 0)` on `grid`, doubling `n_radial` until the slice
/// changes by less than [`REFINEMENT_TOLERANCE`] of its peak. Returns the
/// finer slice and the resolution it was computed at.
pub fn refined_slice(
    start: RadialQuadrature,
    grid: &UniformGrid,
) -> Result<(Vec<f64>, RadialQuadrature)> {
    let eval = |q: &RadialQuadrature| -> Vec<f64> { grid.values().map(|t| q.density(t)).collect() };
    let mut coarse_q = start;
    let mut coarse = eval(&coarse_q);
    loop {
        let fine_q = coarse_q.doubled();
        let fine = eval(&fine_q);
        let peak = fine.iter().cloned().fold(0.0, f64::max);
        let change = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / peak;
        if change <= REFINEMENT_TOLERANCE {
            return Ok((fine, fine_q));
        }
        if fine_q.n_radial >= MAX_RADIAL_POINTS {
            return Err(Error::Refinement {
                n_radial: fine_q.n_radial,
                change,
            });
        }
        coarse_q = fine_q;
        coarse = fine;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarMethod {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

/// Joint angle density on a periodic `[-π, π)` grid for both photons.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarJointPD {
    pub dist: JointDistribution2D,
    pub method: PolarMethod,
    /// Radial resolution actually used (quadrature only).
    pub n_radial: Option<usize>,
}

impl PolarJointPD {
    pub fn grid(&self) -> UniformGrid {
        self.dist.axis1
    }

    /// P(θs | θi = grid[j]) along θs (unnormalized, max-scaled with the grid).
    pub fn conditional_slice(&self, j: usize) -> Vec<f64> {
        self.dist.column(j)
    }

    /// Index of the grid point θi = 0.
    pub fn zero_index(&self) -> usize {
        self.grid().len() / 2
    }

    /// Δθ at the maximum of the θi = 0 slice, wrapped to `[0, π]`.
    pub fn peak_separation(&self) -> f64 {
        let j = self.zero_index();
        let slice = self.conditional_slice(j);
        let i = crate::stats::argmax(&slice);
        crate::stats::wrap_angle(self.grid().value(i) - self.grid().value(j)).abs()
    }

    /// Build a grid from a Δθ profile sampled on the same periodic grid
    /// (entry `m` holds Δθ = m·step).
    pub(crate) fn from_difference_profile(
        grid: UniformGrid,
        profile: &[f64],
        method: PolarMethod,
    ) -> Result<Self> {
        let n = grid.len();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(profile[(i + n - j) % n]);
            }
        }
        Ok(Self {
            dist: JointDistribution2D::new(grid, grid, values)?.max_normalize(),
            method,
            n_radial: None,
        })
    }
}

fn check_theta_points(n_theta: usize) -> Result<UniformGrid> {
    if n_theta < MIN_THETA_POINTS || n_theta % 2 != 0 {
        return Err(Error::ParameterDomain {
            name: "n_theta",
            reason: format!("need an even count >= {MIN_THETA_POINTS}, got {n_theta}"),
        });
    }
    UniformGrid::periodic(n_theta)
}

/// Joint angle density by radial quadrature on an `n_theta × n_theta` grid.
/// Every grid entry is integrated with its own cos(θs − θi).
pub fn joint_angle_pd_quadrature(
    params: &ExperimentParams,
    z: f64,
    n_theta: usize,
    n_radial: usize,
) -> Result<PolarJointPD> {
    let widths = beam_widths(params, z)?;
    joint_angle_pd_for_widths(&widths, n_theta, n_radial)
}

/// As [`joint_angle_pd_quadrature`] for explicit sum/difference widths.
pub fn joint_angle_pd_for_widths(
    widths: &BeamWidths,
    n_theta: usize,
    n_radial: usize,
) -> Result<PolarJointPD> {
    use rayon::prelude::*;

    let grid = check_theta_points(n_theta)?;
    if n_radial < MIN_RADIAL_POINTS {
        return Err(Error::ParameterDomain {
            name: "n_radial",
            reason: format!("need >= {MIN_RADIAL_POINTS}, got {n_radial}"),
        });
    }
    let (_, quad) = refined_slice(RadialQuadrature::new(widths, n_radial), &grid)?;
    let values: Vec<f64> = (0..n_theta * n_theta)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n_theta, idx % n_theta);
            quad.density_cos((grid.value(i) - grid.value(j)).cos())
        })
        .collect();
    Ok(PolarJointPD {
        dist: JointDistribution2D::new(grid, grid, values)?.max_normalize(),
        method: PolarMethod::Quadrature,
        n_radial: Some(quad.n_radial),
    })
}

/// Closed-form (equal-radius) joint angle density on an `n_theta` grid.
pub fn joint_angle_pd_closed_form_grid(
    coeffs: &AngleKernelCoeffs,
    n_theta: usize,
) -> Result<PolarJointPD> {
    let grid = check_theta_points(n_theta)?;
    let profile = (0..n_theta)
        .map(|m| joint_angle_pd_closed_form(coeffs, m as f64 * grid.step()))
        .collect::<Result<Vec<_>>>()?;
    PolarJointPD::from_difference_profile(grid, &profile, PolarMethod::ClosedForm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleSigmaMethod {
    /// Full width at half maximum of the equal-radius form.
    FwhmClosedForm,
    /// Circular standard deviation of the quadrature θi = 0 slice.
    StddevQuadrature,
}

/// Full width reported when the half-maximum level is never reached on the
/// circle: the width of a uniform distribution over 2π in standard-deviation
/// terms, 2π/√12.
pub const SATURATED_WIDTH: f64 = 2.0 * PI / 3.464_101_615_137_754_5;

/// Half-maximum full width of `P0/(C + D cos Δθ)^{3/2}` about its peak, or
/// `None` when the distribution never falls to half its maximum.
pub fn fwhm_closed_form(coeffs: &AngleKernelCoeffs) -> Option<f64> {
    let l = half_max_level();
    if coeffs.d == 0.0 {
        return None;
    }
    let ratio = coeffs.c / coeffs.d;
    let arg = if coeffs.d < 0.0 {
        (l - 1.0) * ratio + l
    } else {
        l - (l - 1.0) * ratio
    };
    (-1.0..=1.0).contains(&arg).then(|| 2.0 * arg.acos())
}

pub fn conditional_angle_sigma(
    params: &ExperimentParams,
    z: f64,
    method: AngleSigmaMethod,
) -> Result<UncertaintyEstimate> {
    require_non_negative("z", z)?;
    let widths = beam_widths(params, z)?;
    match method {
        AngleSigmaMethod::FwhmClosedForm => {
            let coeffs = AngleKernelCoeffs::from_widths(&widths);
            let mut est =
                UncertaintyEstimate::new(SATURATED_WIDTH, Unit::Angle, Method::Analytic, Some(z));
            match fwhm_closed_form(&coeffs) {
                Some(v) => est.value = v,
                None => est.saturated = true,
            }
            Ok(est)
        }
        AngleSigmaMethod::StddevQuadrature => {
            let value = stddev_for_widths(&widths, DEFAULT_THETA_POINTS, PI)?;
            Ok(UncertaintyEstimate::new(
                value,
                Unit::Angle,
                Method::Quadrature,
                Some(z),
            ))
        }
    }
}

/// Circular standard deviation about the peak of the θi = 0 quadrature slice
/// for explicit widths, restricted to `|Δθ - peak| <= half_window`.
pub fn stddev_for_widths(widths: &BeamWidths, n_theta: usize, half_window: f64) -> Result<f64> {
    let grid = check_theta_points(n_theta)?;
    let (slice, _) = refined_slice(RadialQuadrature::auto(widths), &grid)?;
    Ok(circular_sd_about_peak(&grid, &slice, half_window))
}
