//! Propagation of SPDC two-photon transverse correlations: position, angle
//! and OAM distributions, a thin Gaussian turbulence plane, synthetic EMCCD
//! frame stacks with coincidence analysis, and EPR uncertainty products.

pub mod angular;
pub mod coincidence;
pub mod distribution;
pub mod epr;
pub mod error;
pub mod fit;
pub mod frames;
pub mod lm;
pub mod oam;
pub mod params;
pub mod position;
pub mod sampling;
pub mod stats;
pub mod turbulence;
pub mod uncertainty;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use distribution::{JointDistribution2D, UniformGrid};
pub use error::{Error, Result};
pub use params::{beam_widths, derive_params, BeamWidths, ExperimentParams};
pub use uncertainty::{FitDiagnostics, Method, UncertaintyEstimate, Unit};
