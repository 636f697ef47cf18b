//! Exact draws of photon-pair transverse positions.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::params::BeamWidths;

/// Transverse (x, y) positions of the signal and idler photon.
pub type PairPositions = ([f64; 2], [f64; 2]);

/// Source of photon-pair positions at the detection plane.
pub trait PairSampler: Sync {
    fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> PairPositions;
}

/// Clean biphoton: per axis, ρs+ρi ~ N(0, w²) and ρs−ρi ~ N(0, σ²),
/// independent of each other and of the other axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPairSampler {
    pub sum_sigma: f64,
    pub diff_sigma: f64,
}

impl GaussianPairSampler {
    pub fn new(widths: &BeamWidths) -> Self {
        Self {
            sum_sigma: widths.w_z,
            diff_sigma: widths.sigma_z,
        }
    }

    /// Sum and difference coordinates for one axis.
    pub fn sum_diff<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let s: f64 = rng.sample(StandardNormal);
        let d: f64 = rng.sample(StandardNormal);
        (s * self.sum_sigma, d * self.diff_sigma)
    }
}

impl PairSampler for GaussianPairSampler {
    fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> PairPositions {
        let (sx, dx) = self.sum_diff(rng);
        let (sy, dy) = self.sum_diff(rng);
        (
            [(sx + dx) / 2.0, (sy + dy) / 2.0],
            [(sx - dx) / 2.0, (sy - dy) / 2.0],
        )
    }
}

/// Clean pairs displaced by independent Gaussian per-photon offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedPairSampler {
    pub clean: GaussianPairSampler,
    /// Standard deviation of each photon's displacement, per axis.
    pub shift_sigma: f64,
}

impl PairSampler for ShiftedPairSampler {
    fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> PairPositions {
        let (mut s, mut i) = self.clean.sample_pair(rng);
        for v in s.iter_mut().chain(i.iter_mut()) {
            let g: f64 = rng.sample(StandardNormal);
            *v += g * self.shift_sigma;
        }
        (s, i)
    }
}
