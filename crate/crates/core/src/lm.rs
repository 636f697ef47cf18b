//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with a numerical
//! Jacobian. Bounded parameters are handled by the callers through smooth
//! reparameterizations, so the solver itself is unconstrained.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-8;
const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Row-major covariance of `params`: s²·(JᵀJ)⁻¹ with s² = RSS/(m−n).
    pub covariance: Vec<f64>,
}

fn residual_vector<F>(f: &F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    DVector::from_vec(f(x.as_slice()))
}

fn jacobian<F>(f: &F, x: &DVector<f64>, m: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1e-3);
        xp[j] = x[j] + h;
        let fp = residual_vector(f, &xp);
        xp[j] = x[j] - h;
        let fm = residual_vector(f, &xp);
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Minimize ½‖f(x)‖² starting at `x0`.
///
/// Converges when an accepted step satisfies ‖δ‖ < 1e-8·(‖x‖ + 1e-8), or when
/// no damping level yields a decrease (a stationary point). Fails with
/// [`Error::DegenerateFit`] when JᵀJ is rank deficient at the start and with
/// [`Error::FitNonConvergence`] after [`MAX_ITERATIONS`].
pub fn levenberg_marquardt<F>(f: F, x0: &[f64]) -> Result<LmFit>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut r = residual_vector(&f, &x);
    let m = r.len();
    if m < n {
        return Err(Error::InsufficientData(format!(
            "{m} residuals for {n} parameters"
        )));
    }
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::DegenerateFit(
            "non-finite residual at the starting point".into(),
        ));
    }
    let mut jac = jacobian(&f, &x, m);
    check_rank(&jac)?;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut accepted = false;
        while lambda <= MAX_DAMPING {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &x + &step;
            let r_trial = residual_vector(&f, &trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial <= cost {
                let small = step.norm() < STEP_TOLERANCE * (x.norm() + STEP_TOLERANCE);
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
        jac = jacobian(&f, &x, m);
    }
    if !converged {
        return Err(Error::FitNonConvergence {
            iterations,
            residual: cost.sqrt(),
        });
    }
    let jac = jacobian(&f, &x, m);
    let covariance = covariance(&jac, cost, m, n);
    Ok(LmFit {
        params: x.as_slice().to_vec(),
        residual_norm: cost.sqrt(),
        iterations,
        covariance,
    })
}

fn check_rank(jac: &DMatrix<f64>) -> Result<()> {
    let n = jac.ncols();
    let sv = jac.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|s| **s > 1e-12 * max).count();
    if max == 0.0 || rank < n {
        return Err(Error::DegenerateFit(format!(
            "Jacobian rank {rank} < {n} parameters"
        )));
    }
    Ok(())
}

fn covariance(jac: &DMatrix<f64>, cost: f64, m: usize, n: usize) -> Vec<f64> {
    let s2 = if m > n { cost / (m - n) as f64 } else { 0.0 };
    let jtj = jac.transpose() * jac;
    match jtj.pseudo_inverse(1e-14) {
        Ok(inv) => (inv * s2).transpose().as_slice().to_vec(),
        Err(_) => vec![f64::NAN; n * n],
    }
}
