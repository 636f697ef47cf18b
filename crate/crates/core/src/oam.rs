//! Conditional OAM distributions: the delta-plus-noise model for clean
//! propagation, the exponential-plus-noise model used after turbulence, the
//! OAM uncertainty, and least-squares fits of both forms.

use std::io::Write;

use crate::distribution::{JointDistribution2D, UniformGrid};
use crate::error::{Error, Result};
use crate::lm::levenberg_marquardt;
use crate::uncertainty::{FitDiagnostics, Method, UncertaintyEstimate, Unit};

pub const DEFAULT_L_MAX: i32 = 15;
/// Largest probability mass a model may place outside `[-Lmax, Lmax]`.
pub const MAX_OAM_TRUNCATION: f64 = 1e-6;
const MIN_FIT_POINTS: usize = 7;

/// Probabilities over the integers `-l_max..=l_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct OamDistribution {
    l_max: i32,
    probabilities: Vec<f64>,
    normalized: bool,
}

impl OamDistribution {
    pub fn new(l_max: i32, probabilities: Vec<f64>) -> Result<Self> {
        if l_max < 0 || probabilities.len() != (2 * l_max + 1) as usize {
            return Err(Error::ParameterDomain {
                name: "probabilities",
                reason: format!(
                    "expected {} entries for l_max = {l_max}, got {}",
                    2 * l_max.max(0) + 1,
                    probabilities.len()
                ),
            });
        }
        if let Some(p) = probabilities.iter().find(|p| !(**p >= 0.0)) {
            return Err(Error::ParameterDomain {
                name: "probabilities",
                reason: format!("must be >= 0, found {p}"),
            });
        }
        Ok(Self {
            l_max,
            probabilities,
            normalized: false,
        })
    }

    pub fn l_max(&self) -> i32 {
        self.l_max
    }

    pub fn ls(&self) -> impl Iterator<Item = i32> {
        -self.l_max..=self.l_max
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, l: i32) -> f64 {
        if l.abs() > self.l_max {
            0.0
        } else {
            self.probabilities[(l + self.l_max) as usize]
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn normalize(mut self) -> Result<Self> {
        let total: f64 = self.probabilities.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ParameterDomain {
                name: "probabilities",
                reason: "cannot normalize an all-zero distribution".into(),
            });
        }
        for p in &mut self.probabilities {
            *p /= total;
        }
        self.normalized = true;
        Ok(self)
    }

    /// The distribution relabelled `l → −l`.
    pub fn mirrored(&self) -> Self {
        let mut p = self.probabilities.clone();
        p.reverse();
        Self {
            probabilities: p,
            ..*self
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["l", "probability"])?;
        for (l, p) in self.ls().zip(&self.probabilities) {
            w.write_record(&[l.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OamForm {
    /// `S0·δ_{l,0} + N·exp(−l²/2σ_f²)`
    DeltaGaussian,
    /// `a·exp(−b|l|) + N·exp(−l²/2σ_f²)`
    ExpGaussian,
    /// `a·exp(−b|l|)`
    Exponential,
}

impl OamForm {
    fn parameter_names(&self) -> Vec<&'static str> {
        match self {
            OamForm::DeltaGaussian => vec!["S0", "N", "sigma_f"],
            OamForm::ExpGaussian => vec!["a", "b", "N", "sigma_f"],
            OamForm::Exponential => vec!["a", "b"],
        }
    }
}

/// Unnormalized conditional OAM model. Fields that the form does not use
/// are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OamNoiseModel {
    pub form: OamForm,
    pub s0: f64,
    pub n: f64,
    pub sigma_f: f64,
    pub a: f64,
    pub b: f64,
}

impl OamNoiseModel {
    pub fn delta_gaussian(s0: f64, n: f64, sigma_f: f64) -> Self {
        Self {
            form: OamForm::DeltaGaussian,
            s0,
            n,
            sigma_f,
            a: 0.0,
            b: 0.0,
        }
    }

    pub fn exp_gaussian(a: f64, b: f64, n: f64, sigma_f: f64) -> Self {
        Self {
            form: OamForm::ExpGaussian,
            s0: 0.0,
            n,
            sigma_f,
            a,
            b,
        }
    }

    pub fn exponential(a: f64, b: f64) -> Self {
        Self {
            form: OamForm::Exponential,
            s0: 0.0,
            n: 0.0,
            sigma_f: 0.0,
            a,
            b,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("S0", self.s0),
            ("N", self.n),
            ("sigma_f", self.sigma_f),
            ("a", self.a),
            ("b", self.b),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::ParameterDomain {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if self.n > 0.0 && self.sigma_f == 0.0 {
            return Err(Error::ParameterDomain {
                name: "sigma_f",
                reason: "must be > 0 when N > 0".into(),
            });
        }
        Ok(())
    }

    fn gaussian(&self, l: f64) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.n * (-l * l / (2.0 * self.sigma_f * self.sigma_f)).exp()
        }
    }

    /// Unnormalized model value at `l`.
    pub fn evaluate(&self, l: i32) -> f64 {
        let lf = l as f64;
        match self.form {
            OamForm::DeltaGaussian => {
                let delta = if l == 0 { self.s0 } else { 0.0 };
                delta + self.gaussian(lf)
            }
            OamForm::ExpGaussian => self.a * (-self.b * lf.abs()).exp() + self.gaussian(lf),
            OamForm::Exponential => self.a * (-self.b * lf.abs()).exp(),
        }
    }

    /// Model mass with |l| > l_max, as a fraction of the total.
    fn truncated_mass(&self, l_max: i32) -> f64 {
        let inside: f64 = (-l_max..=l_max).map(|l| self.evaluate(l)).sum();
        let mut tail = 0.0;
        if self.n > 0.0 {
            let reach = l_max + (40.0 * self.sigma_f).ceil() as i32 + 1;
            tail += 2.0
                * (l_max + 1..=reach)
                    .map(|l| self.gaussian(l as f64))
                    .sum::<f64>();
        }
        if self.a > 0.0 && self.form != OamForm::DeltaGaussian {
            let q = (-self.b).exp();
            tail += if q < 1.0 {
                2.0 * self.a * q.powi(l_max + 1) / (1.0 - q)
            } else {
                f64::INFINITY
            };
        }
        tail / (inside + tail)
    }
}

/// Normalized `P(l_s | l_i = 0)` on `[-l_max, l_max]` from `model`.
pub fn conditional_oam_clean(model: &OamNoiseModel, l_max: i32) -> Result<OamDistribution> {
    model.validate()?;
    if model.n > 0.0 && (l_max as f64) < 5.0 * model.sigma_f {
        return Err(Error::ParameterDomain {
            name: "l_max",
            reason: format!("need l_max >= 5·sigma_f = {}", 5.0 * model.sigma_f),
        });
    }
    let outside = model.truncated_mass(l_max);
    if outside > MAX_OAM_TRUNCATION {
        return Err(Error::OamTruncation {
            mass_outside: outside,
        });
    }
    let probs = (-l_max..=l_max).map(|l| model.evaluate(l)).collect();
    OamDistribution::new(l_max, probs)?.normalize()
}

fn discrete_sd(dist: &OamDistribution) -> f64 {
    let total: f64 = dist.probabilities.iter().sum();
    let mean: f64 = dist
        .ls()
        .zip(&dist.probabilities)
        .map(|(l, p)| l as f64 * p)
        .sum::<f64>()
        / total;
    let var: f64 = dist
        .ls()
        .zip(&dist.probabilities)
        .map(|(l, p)| (l as f64 - mean).powi(2) * p)
        .sum::<f64>()
        / total;
    var.sqrt()
}

/// Standard deviation of the integer-valued distribution, in ħ.
pub fn oam_uncertainty(dist: &OamDistribution) -> UncertaintyEstimate {
    UncertaintyEstimate::new(discrete_sd(dist), Unit::Hbar, Method::Analytic, None)
}

/// Clean two-photon OAM matrix `P(l_s, l_i) = S_{l_s} δ_{l_i, −l_s}`.
pub fn joint_oam_clean(spiral: &OamDistribution) -> Result<JointDistribution2D> {
    let l_max = spiral.l_max();
    let n = (2 * l_max + 1) as usize;
    let axis = UniformGrid::new(-l_max as f64, 1.0, n.max(2))?;
    let mut values = vec![0.0; n * n];
    for (i, l) in spiral.ls().enumerate() {
        let j = (-l + l_max) as usize;
        values[i * n + j] = spiral.probability(l);
    }
    JointDistribution2D::new(axis, axis, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OamFit {
    pub model: OamNoiseModel,
    pub diagnostics: FitDiagnostics,
}

impl OamFit {
    /// Uncertainty of the fitted model normalized on `[-l_max, l_max]`.
    pub fn uncertainty(&self, l_max: i32) -> Result<UncertaintyEstimate> {
        let probs = (-l_max..=l_max).map(|l| self.model.evaluate(l)).collect();
        let dist = OamDistribution::new(l_max, probs)?.normalize()?;
        Ok(UncertaintyEstimate::fitted(
            discrete_sd(&dist),
            Unit::Hbar,
            None,
            self.diagnostics.clone(),
        ))
    }
}

/// Least-squares fit of `form` to the (normalized) samples. Nonnegativity
/// is enforced by fitting square roots of the amplitudes and widths.
pub fn fit_oam_model(samples: &OamDistribution, form: OamForm) -> Result<OamFit> {
    let data = samples.clone().normalize()?;
    let ls: Vec<f64> = data.ls().map(|l| l as f64).collect();
    let ps = data.probabilities().to_vec();
    let p0 = data.probability(0);

    if ps.iter().zip(&ls).all(|(p, l)| *l == 0.0 || *p == 0.0) {
        if form != OamForm::DeltaGaussian {
            return Err(Error::DegenerateFit(
                "all off-peak values are zero; only the delta form applies".into(),
            ));
        }
        return Ok(OamFit {
            model: OamNoiseModel::delta_gaussian(p0, 0.0, 0.0),
            diagnostics: FitDiagnostics {
                residual_norm: 0.0,
                relative_residual: 0.0,
                iterations: 0,
                parameter_names: form.parameter_names(),
                parameters: vec![p0, 0.0, 0.0],
                covariance: vec![0.0; 9],
            },
        });
    }
    let nonzero = ps.iter().filter(|p| **p > 0.0).count();
    if nonzero < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "need >= {MIN_FIT_POINTS} l values with nonzero counts, got {nonzero}"
        )));
    }

    let off_peak: Vec<(f64, f64)> = ls
        .iter()
        .cloned()
        .zip(ps.iter().cloned())
        .filter(|(l, _)| *l != 0.0)
        .collect();
    let off_mass: f64 = off_peak.iter().map(|(_, p)| p).sum();
    let sigma0 = (off_peak.iter().map(|(l, p)| l * l * p).sum::<f64>() / off_mass)
        .sqrt()
        .max(0.5);
    let n0 = (data.probability(1) + data.probability(-1)) / 2.0 * (0.5 / (sigma0 * sigma0)).exp();
    let b0 = if data.probability(1) > 0.0 && p0 > 0.0 {
        (p0 / data.probability(1)).ln().clamp(0.1, 5.0)
    } else {
        1.0
    };

    let (x0, build): (Vec<f64>, Box<dyn Fn(&[f64]) -> OamNoiseModel>) = match form {
        OamForm::DeltaGaussian => (
            vec![
                (p0 - n0).max(1e-3).sqrt(),
                n0.max(1e-6).sqrt(),
                sigma0.sqrt(),
            ],
            Box::new(|u: &[f64]| {
                OamNoiseModel::delta_gaussian(u[0] * u[0], u[1] * u[1], u[2] * u[2])
            }),
        ),
        OamForm::ExpGaussian => (
            vec![
                p0.sqrt(),
                b0.sqrt(),
                (0.1 * n0).max(1e-4).sqrt(),
                (2.0 * sigma0).sqrt(),
            ],
            Box::new(|u: &[f64]| {
                OamNoiseModel::exp_gaussian(u[0] * u[0], u[1] * u[1], u[2] * u[2], u[3] * u[3])
            }),
        ),
        OamForm::Exponential => (
            vec![p0.sqrt(), b0.sqrt()],
            Box::new(|u: &[f64]| OamNoiseModel::exponential(u[0] * u[0], u[1] * u[1])),
        ),
    };
    let residuals = |u: &[f64]| -> Vec<f64> {
        let m = build(u);
        ls.iter()
            .zip(&ps)
            .map(|(l, p)| m.evaluate(*l as i32) - p)
            .collect()
    };
    let fit = levenberg_marquardt(residuals, &x0)?;
    let model = build(&fit.params);
    let parameters = match form {
        OamForm::DeltaGaussian => vec![model.s0, model.n, model.sigma_f],
        OamForm::ExpGaussian => vec![model.a, model.b, model.n, model.sigma_f],
        OamForm::Exponential => vec![model.a, model.b],
    };
    let data_norm = ps.iter().map(|p| p * p).sum::<f64>().sqrt();
    // Covariance of the squared parameters by the delta method: dθ/du = 2u.
    let np = fit.params.len();
    let mut covariance = fit.covariance.clone();
    for i in 0..np {
        for j in 0..np {
            covariance[i * np + j] *= 4.0 * fit.params[i] * fit.params[j];
        }
    }
    Ok(OamFit {
        model,
        diagnostics: FitDiagnostics {
            residual_norm: fit.residual_norm,
            relative_residual: fit.residual_norm / data_norm,
            iterations: fit.iterations,
            parameter_names: form.parameter_names(),
            parameters,
            covariance,
        },
    })
}
