//! EPR uncertainty products and the search for entanglement loss and revival.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;

use crate::angular::{conditional_angle_sigma, AngleSigmaMethod};
use crate::error::{require_positive, Error, Result};
use crate::params::ExperimentParams;
use crate::position::conditional_position_sigma;
use crate::turbulence::{conditional_angle_sigma_turbulent, MonteCarloSettings, TurbulenceParams};
use crate::uncertainty::{Method, UncertaintyEstimate, Unit};

/// Products below this bound (in ħ) certify entanglement.
pub const EPR_BOUND: f64 = 0.5;
/// Bisection stops once the bracket is narrower than this (m).
pub const BISECTION_RESOLUTION: f64 = 1e-3;
pub const DEFAULT_SCAN_POINTS: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    PositionMomentum,
    AngleOam,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::PositionMomentum => "position-momentum",
            Basis::AngleOam => "angle-oam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EprProduct {
    pub basis: Basis,
    pub z: f64,
    /// In units of ħ.
    pub product: f64,
    /// Position or angle uncertainty at `z`.
    pub local: UncertaintyEstimate,
    /// Momentum or OAM uncertainty (z-independent).
    pub conjugate: UncertaintyEstimate,
    pub entangled: bool,
}

impl EprProduct {
    fn new(
        basis: Basis,
        z: f64,
        local: UncertaintyEstimate,
        conjugate: UncertaintyEstimate,
    ) -> Self {
        let product = local.value * conjugate.value;
        Self {
            basis,
            z,
            product,
            local,
            conjugate,
            entangled: product < EPR_BOUND,
        }
    }
}

/// How the conditional angle uncertainty is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleModel {
    /// Free propagation, with the chosen estimator.
    Clean(AngleSigmaMethod),
    /// Beyond a turbulence plane, by Monte Carlo with a ±`half_window`
    /// window about the peak.
    Turbulent {
        turb: TurbulenceParams,
        settings: MonteCarloSettings,
        half_window: f64,
    },
}

impl Default for AngleModel {
    fn default() -> Self {
        AngleModel::Clean(AngleSigmaMethod::StddevQuadrature)
    }
}

impl AngleModel {
    pub fn turbulent(turb: TurbulenceParams, settings: MonteCarloSettings) -> Self {
        AngleModel::Turbulent {
            turb,
            settings,
            half_window: PI,
        }
    }

    pub fn angle_sigma(&self, params: &ExperimentParams, z: f64) -> Result<UncertaintyEstimate> {
        match self {
            AngleModel::Clean(method) => conditional_angle_sigma(params, z, *method),
            AngleModel::Turbulent {
                turb,
                settings,
                half_window,
            } => conditional_angle_sigma_turbulent(params, turb, z, settings, Some(*half_window)),
        }
    }

    /// Smallest z at which the model is defined.
    fn z_floor(&self) -> f64 {
        match self {
            AngleModel::Clean(_) => 0.0,
            AngleModel::Turbulent { turb, .. } => turb.d(),
        }
    }
}

/// EPR product for `basis` at `z` with the clean-propagation estimators.
/// `conjugate` is Δp in ħ/m (position-momentum) or Δl in ħ (angle-OAM).
pub fn epr_product(
    basis: Basis,
    params: &ExperimentParams,
    z: f64,
    conjugate: Option<f64>,
) -> Result<EprProduct> {
    let Some(c) = conjugate else {
        return Err(Error::Config(match basis {
            Basis::PositionMomentum => "missing momentum uncertainty (delta_p)".into(),
            Basis::AngleOam => "missing OAM uncertainty (delta_l)".into(),
        }));
    };
    match basis {
        Basis::PositionMomentum => position_momentum_product(params, z, c),
        Basis::AngleOam => angle_oam_product(params, &AngleModel::default(), z, c),
    }
}

pub fn position_momentum_product(
    params: &ExperimentParams,
    z: f64,
    delta_p: f64,
) -> Result<EprProduct> {
    require_positive("delta_p", delta_p)?;
    let local = conditional_position_sigma(params, z)?;
    let conj = UncertaintyEstimate::new(delta_p, Unit::HbarPerLength, Method::Analytic, None);
    Ok(EprProduct::new(Basis::PositionMomentum, z, local, conj))
}

pub fn angle_oam_product(
    params: &ExperimentParams,
    model: &AngleModel,
    z: f64,
    delta_l: f64,
) -> Result<EprProduct> {
    require_positive("delta_l", delta_l)?;
    let local = model.angle_sigma(params, z)?;
    let conj = UncertaintyEstimate::new(delta_l, Unit::Hbar, Method::Analytic, None);
    Ok(EprProduct::new(Basis::AngleOam, z, local, conj))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Product rises through the bound.
    Loss,
    /// Product falls through the bound.
    Revival,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Loss => "loss",
            Direction::Revival => "revival",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Midpoint of the final bisection bracket.
    pub z: f64,
    pub direction: Direction,
    /// Final bracket `(lo, hi)`, narrower than [`BISECTION_RESOLUTION`].
    pub bracket: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub basis: Basis,
    /// `(z, product)` with z strictly increasing.
    pub points: Vec<(f64, f64)>,
    pub crossings: Vec<Crossing>,
}

impl ScanResult {
    pub fn revivals(&self) -> impl Iterator<Item = &Crossing> {
        self.crossings
            .iter()
            .filter(|c| c.direction == Direction::Revival)
    }

    pub fn losses(&self) -> impl Iterator<Item = &Crossing> {
        self.crossings
            .iter()
            .filter(|c| c.direction == Direction::Loss)
    }
}

/// `n` geometrically spaced distances over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    require_positive("z_min", lo)?;
    if !(hi > lo) || n < 2 {
        return Err(Error::ParameterDomain {
            name: "z_range",
            reason: format!("need z_max > z_min and >= 2 points (got {lo}..{hi}, {n})"),
        });
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo * (r * i as f64).exp()
            }
        })
        .collect())
}

/// Scan `f` over `zs` and bisect every sign change of `f − bound` down to
/// [`BISECTION_RESOLUTION`]. The scan is evaluated in parallel; bisection
/// is sequential.
pub fn scan_crossings<F>(basis: Basis, zs: &[f64], bound: f64, f: F) -> Result<ScanResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if zs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::ParameterDomain {
            name: "z_range",
            reason: "scan distances must be strictly increasing".into(),
        });
    }
    let values = zs.par_iter().map(|&z| f(z)).collect::<Result<Vec<_>>>()?;
    let points: Vec<(f64, f64)> = zs.iter().cloned().zip(values).collect();
    let mut crossings = Vec::new();
    for w in points.windows(2) {
        let ((mut lo, flo), (mut hi, fhi)) = (w[0], w[1]);
        let (below_lo, below_hi) = (flo < bound, fhi < bound);
        if below_lo == below_hi {
            continue;
        }
        while hi - lo > BISECTION_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if (f(mid)? < bound) == below_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        crossings.push(Crossing {
            z: 0.5 * (lo + hi),
            direction: if below_lo {
                Direction::Loss
            } else {
                Direction::Revival
            },
            bracket: (lo, hi),
        });
    }
    Ok(ScanResult {
        basis,
        points,
        crossings,
    })
}

/// Locate angle-OAM loss and revival distances in `z_range`. A range with
/// no sign change gives an empty crossing list. For turbulent models the
/// range must lie beyond the plane.
pub fn find_revival(
    params: &ExperimentParams,
    model: &AngleModel,
    delta_l: f64,
    z_range: (f64, f64),
    scan_points: usize,
) -> Result<ScanResult> {
    require_positive("delta_l", delta_l)?;
    if !(z_range.0 > model.z_floor()) {
        return Err(Error::ParameterDomain {
            name: "z_range",
            reason: format!("z_min must exceed {}", model.z_floor()),
        });
    }
    let zs = geometric_grid(z_range.0, z_range.1, scan_points)?;
    scan_crossings(Basis::AngleOam, &zs, EPR_BOUND, |z| {
        Ok(angle_oam_product(params, model, z, delta_l)?.product)
    })
}

/// Position-momentum scan over `z_range`.
pub fn position_scan(
    params: &ExperimentParams,
    delta_p: f64,
    z_range: (f64, f64),
    scan_points: usize,
) -> Result<ScanResult> {
    let zs = geometric_grid(z_range.0, z_range.1, scan_points)?;
    scan_crossings(Basis::PositionMomentum, &zs, EPR_BOUND, |z| {
        Ok(position_momentum_product(params, z, delta_p)?.product)
    })
}

/// Revival distance from the far-field half-maximum law
/// Δθ ≈ 4√(2^{2/3}−1)·kσ0w0/z: z = 4√(2^{2/3}−1)·kσ0w0·Δl/0.5.
pub fn far_field_revival_distance(params: &ExperimentParams, delta_l: f64) -> f64 {
    4.0 * (2f64.powf(2.0 / 3.0) - 1.0).sqrt() * params.crossover_distance() * delta_l / EPR_BOUND
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_literal_product() {
        let p = ExperimentParams::paper();
        let e = epr_product(Basis::AngleOam, &p, 0.05, Some(0.72)).unwrap();
        assert_eq!(e.product, e.local.value * e.conjugate.value);
        assert_eq!(e.entangled, e.product < 0.5);
        let e = epr_product(Basis::PositionMomentum, &p, 0.05, Some(1970.0)).unwrap();
        assert_eq!(e.product, e.local.value * 1970.0);
    }

    #[test]
    fn missing_conjugate_is_config_error() {
        let p = ExperimentParams::paper();
        assert!(matches!(
            epr_product(Basis::AngleOam, &p, 0.1, None),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            epr_product(Basis::PositionMomentum, &p, 0.1, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn near_and_intermediate_angle_products() {
        let p = ExperimentParams::paper();
        assert!(
            epr_product(Basis::AngleOam, &p, 1e-4, Some(0.72))
                .unwrap()
                .entangled
        );
        assert!(
            !epr_product(Basis::AngleOam, &p, 0.05, Some(0.72))
                .unwrap()
                .entangled
        );
    }

    #[test]
    fn position_product_never_revives() {
        let p = ExperimentParams::paper();
        let scan = position_scan(&p, 1970.0, (1e-3, 1.0), 40).unwrap();
        assert!(scan.points.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(scan.revivals().count(), 0);
        assert!(scan.losses().count() <= 1);
    }

    #[test]
    fn bisection_on_a_known_function() {
        let zs = geometric_grid(0.01, 1.0, 10).unwrap();
        let r =
            scan_crossings(Basis::AngleOam, &zs, 0.5, |z| Ok((z - 0.3).powi(2) * 10.0)).unwrap();
        // 10(z−0.3)² = 0.5 at z = 0.3 ± √0.05
        assert_eq!(r.crossings.len(), 2);
        let s = 0.05f64.sqrt();
        assert_eq!(r.crossings[0].direction, Direction::Revival);
        assert!((r.crossings[0].z - (0.3 - s)).abs() < 1e-3);
        assert_eq!(r.crossings[1].direction, Direction::Loss);
        assert!((r.crossings[1].z - (0.3 + s)).abs() < 1e-3);
        for c in &r.crossings {
            assert!(c.bracket.1 - c.bracket.0 <= BISECTION_RESOLUTION);
        }
    }

    #[test]
    fn far_field_law_distance() {
        let p = ExperimentParams::paper();
        let z = far_field_revival_distance(&p, 0.72);
        assert!((z - 0.225).abs() < 0.003, "{z}");
    }

    #[test]
    fn no_crossing_is_not_an_error() {
        let p = ExperimentParams::paper();
        let r = find_revival(&p, &AngleModel::default(), 0.01, (0.3, 1.0), 6).unwrap();
        assert!(r.crossings.is_empty());
    }
}
