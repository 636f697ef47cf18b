use thiserror::Error;

/// Errors produced by the model, estimators, and file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` out of domain: {reason}")]
    ParameterDomain { name: &'static str, reason: String },

    #[error("grid too small: {mass_outside:.3e} of the probability mass lies outside the grid")]
    GridTruncation { mass_outside: f64 },

    #[error("quadrature did not converge: relative change {change:.3e} at n_radial = {n_radial}")]
    Refinement { n_radial: usize, change: f64 },

    #[error("closed-form denominator is not positive ({value:.3e})")]
    NonPositiveDenominator { value: f64 },

    #[error("Monte Carlo ensemble not converged: standard error {achieved:.3e} of peak exceeds {limit:.3e}")]
    Sampling { achieved: f64, limit: f64 },

    #[error("quadrature produced negative value {value:.3e} (peak {peak:.3e})")]
    NegativeQuadrature { value: f64, peak: f64 },

    #[error("OAM range truncates {mass_outside:.3e} of the probability mass")]
    OamTruncation { mass_outside: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(
        "fit did not converge after {iterations} iterations (best residual norm {residual:.6e})"
    )]
    FitNonConvergence { iterations: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("binning error: {0}")]
    Binning(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("frame generation error: {0}")]
    Generation(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

pub(crate) fn require_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain {
            name,
            reason: format!("must be finite and >= 0, got {value}"),
        })
    }
}
