//! Conditional uncertainty values with their unit tag and provenance.

use std::fmt;

/// Unit of a conditional uncertainty. ħ is carried as a symbolic tag so that
/// products report as dimensionless multiples of ħ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    /// metres
    Length,
    /// radians
    Angle,
    /// ħ per metre
    HbarPerLength,
    /// ħ
    Hbar,
}

impl Unit {
    pub fn symbol(&self) -> &'static str {
        match self {
            Unit::Length => "m",
            Unit::Angle => "rad",
            Unit::HbarPerLength => "hbar/m",
            Unit::Hbar => "hbar",
        }
    }
}

/// How an uncertainty was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Analytic,
    Quadrature,
    MonteCarlo,
    Fitted,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Analytic => "analytic",
            Method::Quadrature => "quadrature",
            Method::MonteCarlo => "monte-carlo",
            Method::Fitted => "fitted",
        })
    }
}

/// Least-squares diagnostics attached to fitted estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub residual_norm: f64,
    /// Residual norm divided by the norm of the data.
    pub relative_residual: f64,
    pub iterations: usize,
    pub parameter_names: Vec<&'static str>,
    pub parameters: Vec<f64>,
    /// Row-major covariance estimate of `parameters`.
    pub covariance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyEstimate {
    pub value: f64,
    pub unit: Unit,
    pub method: Method,
    /// Propagation distance; `None` for z-independent quantities.
    pub z: Option<f64>,
    /// Present iff `method == Fitted`.
    pub diagnostics: Option<FitDiagnostics>,
    /// Set when the estimator hit a documented limit (e.g. half maximum
    /// not attained on the circle).
    pub saturated: bool,
    /// Monte Carlo standard error of `value`, when known.
    pub standard_error: Option<f64>,
}

impl UncertaintyEstimate {
    pub fn new(value: f64, unit: Unit, method: Method, z: Option<f64>) -> Self {
        Self {
            value,
            unit,
            method,
            z,
            diagnostics: None,
            saturated: false,
            standard_error: None,
        }
    }

    pub fn fitted(value: f64, unit: Unit, z: Option<f64>, diagnostics: FitDiagnostics) -> Self {
        Self {
            diagnostics: Some(diagnostics),
            ..Self::new(value, unit, Method::Fitted, z)
        }
    }
}

impl fmt::Display for UncertaintyEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6e} {} ({})",
            self.value,
            self.unit.symbol(),
            self.method
        )
    }
}
