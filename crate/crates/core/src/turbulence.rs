//! A single thin Gaussian turbulence plane at distance `d` from the crystal.
//!
//! The plane multiplies the two-photon cross-spectral density by
//! `exp[−|ρ'₂−ρ'₁|²/(2r²)]` per photon. That kernel is the ensemble average
//! of random phase tilts `exp(i a·ρ)` with `a ~ N(0, 1/r²)` per axis. A tilt
//! applied at `d` translates the freely propagated pure-state intensity at
//! `z` by `a (z−d)/k`, so each realization is the clean distribution at `z`
//! shifted per photon. The angle distribution is the average over
//! realizations, estimated by drawing pairs from each shifted distribution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::angular::{PolarJointPD, PolarMethod, DEFAULT_THETA_POINTS, MIN_THETA_POINTS};
use crate::distribution::UniformGrid;
use crate::error::{require_positive, Error, Result};
use crate::oam::OamDistribution;
use crate::params::{beam_widths, BeamWidths, ExperimentParams};
use crate::sampling::{GaussianPairSampler, ShiftedPairSampler};
use crate::stats::{argmax, circular_sd_about_peak};
use crate::uncertainty::{Method, UncertaintyEstimate, Unit};

pub const DEFAULT_REALIZATIONS: usize = 20_000;
pub const DEFAULT_PAIRS_PER_REALIZATION: usize = 256;
/// Largest accepted Monte Carlo standard error, relative to the peak.
pub const MAX_RELATIVE_STANDARD_ERROR: f64 = 0.01;
/// Largest negative spectrum value (relative to the peak) treated as
/// quadrature ringing and clipped to zero.
pub const NEGATIVE_CLIP: f64 = 1e-9;
const BATCHES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceParams {
    d: f64,
    r: f64,
    sigma_r: f64,
    k_s: f64,
}

impl TurbulenceParams {
    /// `sigma_r` defaults to the marginal single-photon width of the clean
    /// field at the plane, √(w(d)² + σ(d)²)/2.
    pub fn new(params: &ExperimentParams, d: f64, r: f64, sigma_r: Option<f64>) -> Result<Self> {
        require_positive("d", d)?;
        require_positive("r", r)?;
        let sigma_r = match sigma_r {
            Some(s) => {
                require_positive("sigma_r", s)?;
                s
            }
            None => beam_widths(params, d)?.marginal_sigma(),
        };
        Ok(Self {
            d,
            r,
            sigma_r,
            k_s: params.k(),
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    pub fn k_s(&self) -> f64 {
        self.k_s
    }

    /// 1/δ² = 1/r² + 1/(4σ_r²).
    pub fn delta(&self) -> f64 {
        1.0 / (1.0 / (self.r * self.r) + 0.25 / (self.sigma_r * self.sigma_r)).sqrt()
    }

    fn require_beyond(&self, z: f64) -> Result<f64> {
        if !(z > self.d) {
            return Err(Error::ParameterDomain {
                name: "z",
                reason: format!("must exceed the turbulence plane distance {}", self.d),
            });
        }
        Ok(z - self.d)
    }

    pub fn propagated(&self, z: f64) -> Result<PropagatedSignalCSD> {
        let dz = self.require_beyond(z)?;
        let b = (1.0 + (dz / (self.k_s * self.sigma_r * self.delta())).powi(2)).sqrt();
        Ok(PropagatedSignalCSD {
            z,
            r_z: self.r * b,
            sigma_rz: self.sigma_r * b,
        })
    }

    /// Per-axis standard deviation of a photon's displacement at `z`
    /// produced by the tilt kicks: (z − d)/(k r).
    pub fn shift_sigma(&self, z: f64) -> Result<f64> {
        Ok(self.require_beyond(z)? / (self.k_s * self.r))
    }

    /// Ensemble-averaged pair sampler at `z`.
    pub fn pair_sampler(&self, params: &ExperimentParams, z: f64) -> Result<ShiftedPairSampler> {
        Ok(ShiftedPairSampler {
            clean: GaussianPairSampler::new(&beam_widths(params, z)?),
            shift_sigma: self.shift_sigma(z)?,
        })
    }
}

/// Signal-mode cross-spectral density parameters at `z` beyond the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagatedSignalCSD {
    pub z: f64,
    pub r_z: f64,
    pub sigma_rz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSettings {
    /// Number of tilt realizations; rounded up to an even count because
    /// realizations come in antithetic pairs.
    pub realizations: usize,
    pub pairs_per_realization: usize,
    pub seed: u64,
    pub n_theta: usize,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        Self {
            realizations: DEFAULT_REALIZATIONS,
            pairs_per_realization: DEFAULT_PAIRS_PER_REALIZATION,
            seed: 0x5eed,
            n_theta: DEFAULT_THETA_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurbulentAnglePD {
    pub pd: PolarJointPD,
    /// Mean per-realization pair count in each Δθ bin; entry `m` is
    /// Δθ = m·(2π/n_theta).
    pub profile: Vec<f64>,
    /// Standard error of each `profile` entry.
    pub standard_error: Vec<f64>,
    /// max(standard_error) / max(profile).
    pub relative_error: f64,
    /// Profiles of contiguous realization batches, for batch-means errors of
    /// derived quantities.
    batch_profiles: Vec<Vec<f64>>,
}

#[derive(Clone)]
struct Accumulator {
    batches: Vec<Vec<u64>>,
    pair_sq: Vec<u64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            batches: vec![vec![0; n]; BATCHES],
            pair_sq: vec![0; n],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.batches.iter_mut().zip(other.batches) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.pair_sq.iter_mut().zip(other.pair_sq) {
            *x += y;
        }
        self
    }
}

fn gaussian_tilt<R: Rng>(rng: &mut R, sigma: f64) -> [f64; 2] {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    [a * sigma, b * sigma]
}

/// Joint angle distribution at `z > d` by tilt-kick Monte Carlo.
///
/// Realization pairs `p = 0..P` use the ChaCha8 substream `p` of `seed`.
/// The signal tilt magnitude of pair `p` is drawn from stratum
/// `[p/P, (p+1)/P)` of its Rayleigh distribution; the second realization of
/// the pair negates both tilts. Counts are integer sums, so the result does
/// not depend on how work is split across threads.
pub fn joint_angle_pd_turbulent(
    params: &ExperimentParams,
    turb: &TurbulenceParams,
    z: f64,
    settings: &MonteCarloSettings,
) -> Result<TurbulentAnglePD> {
    let n = settings.n_theta;
    if n < MIN_THETA_POINTS || n % 2 != 0 {
        return Err(Error::ParameterDomain {
            name: "n_theta",
            reason: format!("need an even count >= {MIN_THETA_POINTS}, got {n}"),
        });
    }
    if settings.realizations < 2 * BATCHES || settings.pairs_per_realization == 0 {
        return Err(Error::ParameterDomain {
            name: "realizations",
            reason: format!("need >= {} realizations and >= 1 pair each", 2 * BATCHES),
        });
    }
    let grid = UniformGrid::periodic(n)?;
    let clean = GaussianPairSampler::new(&beam_widths(params, z)?);
    let lever = turb.require_beyond(z)? / turb.k_s;
    let tilt_sigma = 1.0 / turb.r;
    let tilt_pairs = settings.realizations.div_ceil(2);
    let pairs = settings.pairs_per_realization;
    let step = grid.step();

    let bin = |delta: f64| -> usize {
        let m = (delta / step).round() as i64;
        m.rem_euclid(n as i64) as usize
    };

    let acc = (0..tilt_pairs)
        .into_par_iter()
        .fold(
            || Accumulator::new(n),
            |mut acc, p| {
                let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
                rng.set_stream(p as u64);
                let u = (p as f64 + rng.gen::<f64>()) / tilt_pairs as f64;
                let mag = tilt_sigma * (-2.0 * (1.0 - u).ln()).sqrt();
                let phi = 2.0 * PI * rng.gen::<f64>();
                let a_s = [mag * phi.cos(), mag * phi.sin()];
                let a_i = gaussian_tilt(&mut rng, tilt_sigma);
                let batch = p * BATCHES / tilt_pairs;
                let mut pair_hist = vec![0u64; n];
                for sign in [1.0, -1.0] {
                    let shift_s = [sign * a_s[0] * lever, sign * a_s[1] * lever];
                    let shift_i = [sign * a_i[0] * lever, sign * a_i[1] * lever];
                    for _ in 0..pairs {
                        let (sx, dx) = clean.sum_diff(&mut rng);
                        let (sy, dy) = clean.sum_diff(&mut rng);
                        let ts = ((sy + dy) / 2.0 + shift_s[1]).atan2((sx + dx) / 2.0 + shift_s[0]);
                        let ti = ((sy - dy) / 2.0 + shift_i[1]).atan2((sx - dx) / 2.0 + shift_i[0]);
                        pair_hist[bin(ts - ti)] += 1;
                    }
                }
                for (m, c) in pair_hist.into_iter().enumerate() {
                    acc.batches[batch][m] += c;
                    acc.pair_sq[m] += c * c;
                }
                acc
            },
        )
        .reduce(|| Accumulator::new(n), Accumulator::merge);

    // Statistics use antithetic pairs (averaged) as the independent units.
    let units = tilt_pairs as f64;
    let realizations = 2.0 * units;
    let totals: Vec<u64> = (0..n)
        .map(|m| acc.batches.iter().map(|b| b[m]).sum())
        .collect();
    let profile: Vec<f64> = totals.iter().map(|&t| t as f64 / realizations).collect();
    let standard_error: Vec<f64> = (0..n)
        .map(|m| {
            let mean_unit = totals[m] as f64 / 2.0 / units;
            let mean_sq = acc.pair_sq[m] as f64 / 4.0 / units;
            let var = (mean_sq - mean_unit * mean_unit).max(0.0) * units / (units - 1.0).max(1.0);
            (var / units).sqrt()
        })
        .collect();
    let peak = profile.iter().cloned().fold(0.0, f64::max);
    let relative_error = standard_error.iter().cloned().fold(0.0, f64::max) / peak;
    if relative_error > MAX_RELATIVE_STANDARD_ERROR {
        return Err(Error::Sampling {
            achieved: relative_error,
            limit: MAX_RELATIVE_STANDARD_ERROR,
        });
    }
    let batch_profiles = acc
        .batches
        .iter()
        .map(|b| b.iter().map(|&c| c as f64).collect())
        .collect();
    let pd = PolarJointPD::from_difference_profile(grid, &profile, PolarMethod::MonteCarlo)?;
    Ok(TurbulentAnglePD {
        pd,
        profile,
        standard_error,
        relative_error,
        batch_profiles,
    })
}

impl TurbulentAnglePD {
    /// The θi = 0 conditional slice along the periodic grid.
    pub fn slice(&self) -> Vec<f64> {
        let n = self.profile.len();
        (0..n).map(|i| self.profile[(i + n / 2) % n]).collect()
    }

    /// Circular standard deviation of the θi = 0 slice about its peak over
    /// `|Δθ − peak| ≤ half_window`, with a batch-means standard error.
    pub fn conditional_sigma(&self, half_window: f64) -> (f64, f64) {
        let grid = self.pd.grid();
        let n = self.profile.len();
        let to_slice = |p: &[f64]| -> Vec<f64> { (0..n).map(|i| p[(i + n / 2) % n]).collect() };
        let value = circular_sd_about_peak(&grid, &self.slice(), half_window);
        let estimates: Vec<f64> = self
            .batch_profiles
            .iter()
            .map(|b| circular_sd_about_peak(&grid, &to_slice(b), half_window))
            .collect();
        let b = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / b;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (b - 1.0);
        (value, (var / b).sqrt())
    }

    /// Δθ of the slice maximum, in [0, π].
    pub fn peak_separation(&self) -> f64 {
        let m = argmax(&self.profile);
        let step = 2.0 * PI / self.profile.len() as f64;
        crate::stats::wrap_angle(m as f64 * step).abs()
    }
}

/// Conditional angle uncertainty at `z > d`. `half_window` defaults to π
/// (the full circle).
pub fn conditional_angle_sigma_turbulent(
    params: &ExperimentParams,
    turb: &TurbulenceParams,
    z: f64,
    settings: &MonteCarloSettings,
    half_window: Option<f64>,
) -> Result<UncertaintyEstimate> {
    let pd = joint_angle_pd_turbulent(params, turb, z, settings)?;
    let (value, se) = pd.conditional_sigma(half_window.unwrap_or(PI));
    let mut est = UncertaintyEstimate::new(value, Unit::Angle, Method::MonteCarlo, Some(z));
    est.standard_error = Some(se);
    Ok(est)
}

/// Widths of the ensemble-averaged position distribution at `z`: the tilt
/// displacements add 2·((z−d)/(k r))² to both squared sum and difference
/// widths. Used to cross-check the Monte Carlo.
pub fn effective_widths(
    params: &ExperimentParams,
    turb: &TurbulenceParams,
    z: f64,
) -> Result<BeamWidths> {
    Ok(beam_widths(params, z)?.blurred(turb.shift_sigma(z)?))
}

/// Signal OAM spectrum `P(l | l_i = 0; z)` beyond the plane, normalized on
/// `[-l_max, l_max]`.
///
/// At equal radii the propagated CSD depends on Δθ only, so
/// `P(l) ∝ ∫ r dr ∫ e^{ilΔθ} exp[−r²/(2σ_rz²)] exp[−r²(1−cosΔθ)/r_z²] dΔθ`.
/// The radial integral uses the midpoint rule out to eight widths of the
/// radial Gaussian at each Δθ and the angular
/// one the periodic trapezoid rule.
pub fn oam_spectrum_turbulent(
    turb: &TurbulenceParams,
    z: f64,
    l_max: i32,
) -> Result<OamDistribution> {
    if l_max < 10 {
        return Err(Error::ParameterDomain {
            name: "l_max",
            reason: format!("need >= 10, got {l_max}"),
        });
    }
    let csd = turb.propagated(z)?;
    let n_r = 800;
    let n_theta = (64 * l_max as usize).max(2048);
    let a = 0.5 / (csd.sigma_rz * csd.sigma_rz);
    let c = 1.0 / (csd.r_z * csd.r_z);
    let radial: Vec<f64> = (0..n_theta)
        .map(|m| {
            let alpha = a + c * (1.0 - (2.0 * PI * m as f64 / n_theta as f64).cos());
            // eight standard deviations of the Gaussian factor at this Δθ
            let h = 8.0 / (2.0 * alpha).sqrt() / n_r as f64;
            (0..n_r)
                .map(|j| {
                    let r = (j as f64 + 0.5) * h;
                    r * (-alpha * r * r).exp()
                })
                .sum::<f64>()
                * h
        })
        .collect();
    let dtheta = 2.0 * PI / n_theta as f64;
    let raw: Vec<f64> = (-l_max..=l_max)
        .map(|l| {
            radial
                .iter()
                .enumerate()
                .map(|(m, g)| g * (l as f64 * m as f64 * dtheta).cos())
                .sum::<f64>()
                * dtheta
        })
        .collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    let mut probs = Vec::with_capacity(raw.len());
    for v in raw {
        if v < -NEGATIVE_CLIP * peak {
            return Err(Error::NegativeQuadrature { value: v, peak });
        }
        probs.push(v.max(0.0));
    }
    OamDistribution::new(l_max, probs)?.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::joint_angle_pd_for_widths;
    use crate::stats::l1_distance;

    fn paper_turb() -> (ExperimentParams, TurbulenceParams) {
        let p = ExperimentParams::paper();
        let t = TurbulenceParams::new(&p, 0.15, 0.125e-3, None).unwrap();
        (p, t)
    }

    fn fast() -> MonteCarloSettings {
        MonteCarloSettings {
            realizations: 4000,
            pairs_per_realization: 256,
            seed: 11,
            n_theta: 128,
        }
    }

    #[test]
    fn kernel_identity_from_tilt_average() {
        // ⟨cos(a·Δρ)⟩ over a ~ N(0, 1/r²) per axis equals exp(−|Δρ|²/(2r²)).
        let r = 0.125e-3;
        let samples = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tilts: Vec<[f64; 2]> = (0..samples)
            .map(|_| gaussian_tilt(&mut rng, 1.0 / r))
            .collect();
        for i in 0..=30 {
            let sep = 3.0 * r * i as f64 / 30.0;
            let drho = [sep * 0.6, sep * 0.8];
            let mc: f64 = tilts
                .iter()
                .map(|a| (a[0] * drho[0] + a[1] * drho[1]).cos())
                .sum::<f64>()
                / samples as f64;
            let exact = (-sep * sep / (2.0 * r * r)).exp();
            assert!((mc - exact).abs() < 0.01, "sep {sep}: {mc} vs {exact}");
        }
    }

    #[test]
    fn propagated_ratio_constant() {
        let (_, t) = paper_turb();
        for z in [0.16, 0.3, 0.6, 2.0] {
            let c = t.propagated(z).unwrap();
            assert!(c.r_z >= t.r() && c.sigma_rz >= t.sigma_r());
            assert!((c.r_z / c.sigma_rz - t.r() / t.sigma_r()).abs() < 1e-12);
        }
        assert!(t.delta() < t.r().min(2.0 * t.sigma_r()));
        assert!(t.propagated(0.1).is_err());
    }

    #[test]
    fn monte_carlo_matches_blurred_quadrature() {
        let (p, t) = paper_turb();
        let z = 0.4;
        let mc = joint_angle_pd_turbulent(&p, &t, z, &fast()).unwrap();
        let w = effective_widths(&p, &t, z).unwrap();
        let q = joint_angle_pd_for_widths(&w, 128, 256).unwrap();
        let j = q.zero_index();
        let l1 = l1_distance(&mc.slice(), &q.conditional_slice(j));
        assert!(l1 < 0.02, "L1 = {l1}");
        assert!((mc.peak_separation() - PI).abs() < 1e-12);
    }

    #[test]
    fn weak_turbulence_recovers_clean_distribution() {
        let p = ExperimentParams::paper();
        let t = TurbulenceParams::new(&p, 0.15, 1.0, None).unwrap();
        let z = 0.6;
        let mc = joint_angle_pd_turbulent(&p, &t, z, &fast()).unwrap();
        let q = joint_angle_pd_for_widths(&beam_widths(&p, z).unwrap(), 128, 256).unwrap();
        let l1 = l1_distance(&mc.slice(), &q.conditional_slice(q.zero_index()));
        assert!(l1 < 0.01, "L1 = {l1}");
    }

    #[test]
    fn ensemble_size_consistency() {
        let (p, t) = paper_turb();
        let small = joint_angle_pd_turbulent(&p, &t, 0.6, &fast()).unwrap();
        let big = joint_angle_pd_turbulent(
            &p,
            &t,
            0.6,
            &MonteCarloSettings {
                realizations: 8000,
                seed: 12,
                ..fast()
            },
        )
        .unwrap();
        let mut outside = 0;
        for m in 0..small.profile.len() {
            let se = (small.standard_error[m].powi(2) + big.standard_error[m].powi(2)).sqrt();
            if (small.profile[m] - big.profile[m]).abs() > 2.0 * se {
                outside += 1;
            }
        }
        // about 5% of bins may fall outside two standard errors
        assert!(
            outside <= small.profile.len() / 8,
            "{outside} bins outside 2 SE"
        );
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let (p, t) = paper_turb();
        let s = MonteCarloSettings {
            realizations: 64,
            ..fast()
        };
        let a = joint_angle_pd_turbulent(&p, &t, 0.3, &s);
        let b = joint_angle_pd_turbulent(&p, &t, 0.3, &s);
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a.profile, b.profile),
            (Err(a), Err(b)) => assert_eq!(a, b),
            _ => panic!("mismatched outcomes"),
        }
    }

    #[test]
    fn too_few_realizations_reports_sampling_error() {
        let (p, t) = paper_turb();
        let s = MonteCarloSettings {
            realizations: 40,
            pairs_per_realization: 4,
            ..fast()
        };
        assert!(matches!(
            joint_angle_pd_turbulent(&p, &t, 0.3, &s),
            Err(Error::Sampling { .. })
        ));
    }

    #[test]
    fn stronger_turbulence_broadens() {
        let p = ExperimentParams::paper();
        let z = 0.6;
        let mut prev = 0.0;
        for r in [1.0, 0.5e-3, 0.125e-3] {
            let t = TurbulenceParams::new(&p, 0.15, r, None).unwrap();
            let est = conditional_angle_sigma_turbulent(&p, &t, z, &fast(), None).unwrap();
            assert!(
                est.value >= prev - 2.0 * est.standard_error.unwrap(),
                "r = {r}"
            );
            prev = est.value;
        }
    }

    /// Closed form of the equal-radius spectrum: the radial integral gives
    /// 1/(2(A − B cosΔθ)) with A = 1/(2σ_rz²) + 1/r_z², B = 1/r_z², whose
    /// Fourier coefficients are ∝ ρ^|l|, ρ = (A − √(A² − B²))/B.
    fn geometric_spectrum(t: &TurbulenceParams, z: f64, l_max: i32) -> Vec<f64> {
        let c = t.propagated(z).unwrap();
        let b = 1.0 / (c.r_z * c.r_z);
        let a = 0.5 / (c.sigma_rz * c.sigma_rz) + b;
        let rho = (a - (a * a - b * b).sqrt()) / b;
        let raw: Vec<f64> = (-l_max..=l_max).map(|l| rho.powi(l.abs())).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn oam_spectrum_matches_geometric_form() {
        let (_, t) = paper_turb();
        for z in [0.3, 0.6] {
            let spec = oam_spectrum_turbulent(&t, z, 30).unwrap();
            let oracle = geometric_spectrum(&t, z, 30);
            for (a, b) in spec.probabilities().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-5 * oracle[30], "{a} vs {b}");
            }
            for l in 0..=30 {
                assert!((spec.probability(l) - spec.probability(-l)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn oam_spectrum_without_turbulence_is_point_mass() {
        let p = ExperimentParams::paper();
        let t = TurbulenceParams::new(&p, 0.15, 1e3, None).unwrap();
        let spec = oam_spectrum_turbulent(&t, 0.5, 10).unwrap();
        assert!(spec.probability(0) > 0.999_999);
    }

    #[test]
    fn oam_spectrum_preconditions() {
        let (_, t) = paper_turb();
        assert!(oam_spectrum_turbulent(&t, 0.5, 9).is_err());
        assert!(oam_spectrum_turbulent(&t, 0.15, 15).is_err());
    }
}
