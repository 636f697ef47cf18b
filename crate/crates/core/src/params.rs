//! Pump/crystal constants and the Gaussian widths of the biphoton field.

use std::f64::consts::PI;

use crate::error::{require_non_negative, require_positive, Result};

/// Fraction of the crystal length entering the birth-zone width.
pub const BIRTH_ZONE_FACTOR: f64 = 0.455;

/// Pump and crystal constants. `k` and `sigma0` are derived and always
/// consistent with the three primary inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentParams {
    w0: f64,
    crystal_length: f64,
    lambda_p: f64,
    k: f64,
    sigma0: f64,
}

impl ExperimentParams {
    /// Values used throughout the reference experiment: w0 = 507 µm,
    /// L = 5 mm, λp = 355 nm.
    pub fn paper() -> Self {
        derive_params(507e-6, 5e-3, 355e-9).expect("reference parameters are valid")
    }

    /// Pump beam waist at the crystal (m).
    pub fn w0(&self) -> f64 {
        self.w0
    }

    /// Crystal length (m).
    pub fn crystal_length(&self) -> f64 {
        self.crystal_length
    }

    /// Pump wavelength (m).
    pub fn lambda_p(&self) -> f64 {
        self.lambda_p
    }

    /// Down-converted wavenumber π/λp (1/m).
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Birth-zone width √(0.455·L·λp/2π) (m).
    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    /// Rayleigh-like distance k·w0² beyond which the sum coordinate spreads.
    pub fn pump_range(&self) -> f64 {
        self.k * self.w0 * self.w0
    }

    /// k·σ0·w0, the distance at which w(z) = σ(z).
    pub fn crossover_distance(&self) -> f64 {
        self.k * self.sigma0 * self.w0
    }
}

/// Build parameters from the pump waist, crystal length and pump wavelength.
pub fn derive_params(w0: f64, crystal_length: f64, lambda_p: f64) -> Result<ExperimentParams> {
    require_positive("w0", w0)?;
    require_positive("L", crystal_length)?;
    require_positive("lambda_p", lambda_p)?;
    let k = PI / lambda_p;
    let sigma0 = (BIRTH_ZONE_FACTOR * crystal_length * lambda_p / (2.0 * PI)).sqrt();
    if w0 < 10.0 * sigma0 {
        log::warn!(
            "w0 = {w0:.3e} m is not much larger than sigma0 = {sigma0:.3e} m; \
             far/near-field approximations assume w0 >> sigma0"
        );
    }
    Ok(ExperimentParams {
        w0,
        crystal_length,
        lambda_p,
        k,
        sigma0,
    })
}

/// Sum- and difference-coordinate widths at distance `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamWidths {
    /// Width of ρs+ρi, w(z).
    pub w_z: f64,
    /// Width of ρs−ρi, σ(z).
    pub sigma_z: f64,
    pub z: f64,
}

impl BeamWidths {
    /// Conditional standard deviation of one photon's coordinate given the
    /// other's, w·σ/√(w²+σ²).
    pub fn conditional_sigma(&self) -> f64 {
        self.w_z * self.sigma_z / self.w_z.hypot(self.sigma_z)
    }

    /// Marginal standard deviation of a single photon's coordinate.
    pub fn marginal_sigma(&self) -> f64 {
        0.5 * self.w_z.hypot(self.sigma_z)
    }

    /// Correlation coefficient between y_s and y_i; positive in the near field.
    pub fn correlation(&self) -> f64 {
        let (w2, s2) = (self.w_z * self.w_z, self.sigma_z * self.sigma_z);
        (w2 - s2) / (w2 + s2)
    }

    /// Widths after independent Gaussian blurring of each photon's position
    /// with standard deviation `blur` per axis.
    pub fn blurred(&self, blur: f64) -> BeamWidths {
        let extra = 2.0 * blur * blur;
        BeamWidths {
            w_z: (self.w_z * self.w_z + extra).sqrt(),
            sigma_z: (self.sigma_z * self.sigma_z + extra).sqrt(),
            z: self.z,
        }
    }
}

pub fn beam_widths(params: &ExperimentParams, z: f64) -> Result<BeamWidths> {
    require_non_negative("z", z)?;
    let k = params.k;
    let (w0, s0) = (params.w0, params.sigma0);
    let w_z = w0 * (1.0 + z * z / (k * k * w0.powi(4))).sqrt();
    let sigma_z = s0 * (1.0 + z * z / (k * k * s0.powi(4))).sqrt();
    Ok(BeamWidths { w_z, sigma_z, z })
}
