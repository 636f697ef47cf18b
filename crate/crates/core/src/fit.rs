//! Nonlinear fits that turn measured coincidence maps into conditional
//! uncertainties.
//!
//! Position maps are fitted with `b·P_r + a·P_n`, where
//! `P_r = exp[−(y_s+y_i−d)²/2σ1²]·exp[−(y_s−y_i−f)²/2σ2²]` and `P_n` has the
//! same form with the broad widths `n ≥ 5σ1`, `m ≥ 5σ2`. Angle maps are
//! fitted with `b/(1 + q cos(θ_s−θ_i−c))^{3/2} + a`.

use std::f64::consts::PI;

use crate::coincidence::CoincidenceMap;
use crate::distribution::UniformGrid;
use crate::error::{Error, Result};
use crate::lm::{levenberg_marquardt, LmFit};
use crate::stats::{argmax, circular_sd_about_peak, wrap_angle};
use crate::uncertainty::{FitDiagnostics, UncertaintyEstimate, Unit};

const MIN_SIDE: usize = 10;
const SLICE_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionFitParams {
    pub b: f64,
    pub a: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub mu_sum: f64,
    pub mu_diff: f64,
    pub n: f64,
    pub m: f64,
}

impl PositionFitParams {
    pub fn model(&self, ys: f64, yi: f64) -> f64 {
        let s = ys + yi - self.mu_sum;
        let d = ys - yi - self.mu_diff;
        let g = |s1: f64, s2: f64| (-s * s / (2.0 * s1 * s1) - d * d / (2.0 * s2 * s2)).exp();
        self.b * g(self.sigma1, self.sigma2) + self.a * g(self.n, self.m)
    }

    /// σ1σ2/√(σ1²+σ2²).
    pub fn conditional_sigma(&self) -> f64 {
        self.sigma1 * self.sigma2 / self.sigma1.hypot(self.sigma2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleFitParams {
    pub b: f64,
    pub a: f64,
    /// |q| < 1.
    pub q: f64,
    /// Reported in [−π/2, π/2]; the peak of `P_r` is at Δθ = c when q < 0
    /// and at c + π when q > 0.
    pub c: f64,
}

impl AngleFitParams {
    /// `P_r(Δθ) = 1/(1 + q cos(Δθ − c))^{3/2}`.
    pub fn p_r(&self, delta: f64) -> f64 {
        (1.0 + self.q * (delta - self.c).cos()).powf(-1.5)
    }

    pub fn model(&self, delta: f64) -> f64 {
        self.b * self.p_r(delta) + self.a
    }

    /// Circular standard deviation of `P_r` about its peak.
    pub fn conditional_sigma(&self) -> f64 {
        let grid = UniformGrid::periodic(SLICE_POINTS).expect("valid grid");
        let slice: Vec<f64> = grid.values().map(|t| self.p_r(t)).collect();
        circular_sd_about_peak(&grid, &slice, PI)
    }
}

fn check_map(map: &CoincidenceMap) -> Result<usize> {
    let n = map.len();
    let used = map.excluded.iter().filter(|e| !**e).count();
    if n < MIN_SIDE || used < MIN_SIDE * MIN_SIDE {
        return Err(Error::InsufficientData(format!(
            "need a map with >= {MIN_SIDE}x{MIN_SIDE} usable entries, got {n}x{n} with {used}"
        )));
    }
    Ok(n)
}

fn diagnostics(
    fit: &LmFit,
    names: Vec<&'static str>,
    parameters: Vec<f64>,
    data_norm: f64,
    covariance: Vec<f64>,
) -> FitDiagnostics {
    FitDiagnostics {
        residual_norm: fit.residual_norm,
        relative_residual: if data_norm > 0.0 {
            fit.residual_norm / data_norm
        } else {
            0.0
        },
        iterations: fit.iterations,
        parameter_names: names,
        parameters,
        covariance,
    }
}

/// Fit a strip map. Coordinates are rescaled to the bin spacing and values
/// to the largest |net| before fitting; negative net values are kept.
///
/// Parameterization: `b = u0²`, `a = u1²`, `σ1 = e^{u2}`, `σ2 = e^{u3}`,
/// `d = u4`, `f = u5`, `n = σ1(5 + e^{u6})`, `m = σ2(5 + e^{u7})`.
pub fn fit_position_map(map: &CoincidenceMap) -> Result<(PositionFitParams, UncertaintyEstimate)> {
    check_map(map)?;
    let spacing = (map.coords[1] - map.coords[0]).abs();
    let scale = map.included().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
    if !(spacing > 0.0) || !(scale > 0.0) {
        return Err(Error::DegenerateFit(
            "map has no signal or zero spacing".into(),
        ));
    }
    let pts: Vec<(f64, f64, f64)> = map
        .included()
        .map(|(a, b, v)| (a / spacing, b / spacing, v / scale))
        .collect();

    // Seeds from moments of the positive part in sum/difference coordinates.
    let (mut w, mut ms, mut md) = (0.0, 0.0, 0.0);
    for &(a, b, v) in &pts {
        if v > 0.0 {
            w += v;
            ms += v * (a + b);
            md += v * (a - b);
        }
    }
    if w == 0.0 {
        return Err(Error::DegenerateFit("no positive entries".into()));
    }
    ms /= w;
    md /= w;
    let (mut vs, mut vd) = (0.0, 0.0);
    for &(a, b, v) in &pts {
        if v > 0.0 {
            vs += v * (a + b - ms).powi(2);
            vd += v * (a - b - md).powi(2);
        }
    }
    let s1 = (vs / w).sqrt().max(0.5);
    let s2 = (vd / w).sqrt().max(0.5);
    let x0 = [1.0, 0.1, s1.ln(), s2.ln(), ms, md, 5f64.ln(), 5f64.ln()];

    let decode = |u: &[f64]| {
        let sigma1 = u[2].exp();
        let sigma2 = u[3].exp();
        PositionFitParams {
            b: u[0] * u[0],
            a: u[1] * u[1],
            sigma1,
            sigma2,
            mu_sum: u[4],
            mu_diff: u[5],
            n: sigma1 * (5.0 + u[6].exp()),
            m: sigma2 * (5.0 + u[7].exp()),
        }
    };
    let residuals = |u: &[f64]| -> Vec<f64> {
        let p = decode(u);
        pts.iter().map(|&(a, b, v)| p.model(a, b) - v).collect()
    };
    let fit = levenberg_marquardt(residuals, &x0)?;
    let p = decode(&fit.params);
    let params = PositionFitParams {
        b: p.b * scale,
        a: p.a * scale,
        sigma1: p.sigma1 * spacing,
        sigma2: p.sigma2 * spacing,
        mu_sum: p.mu_sum * spacing,
        mu_diff: p.mu_diff * spacing,
        n: p.n * spacing,
        m: p.m * spacing,
    };
    let data_norm = pts.iter().map(|p| p.2 * p.2).sum::<f64>().sqrt();
    let diag = diagnostics(
        &fit,
        vec!["b", "a", "sigma1", "sigma2", "mu_sum", "mu_diff", "n", "m"],
        vec![
            params.b,
            params.a,
            params.sigma1,
            params.sigma2,
            params.mu_sum,
            params.mu_diff,
            params.n,
            params.m,
        ],
        data_norm,
        fit.covariance.clone(),
    );
    let est = UncertaintyEstimate::fitted(params.conditional_sigma(), Unit::Length, None, diag);
    Ok((params, est))
}

/// Fit a sector map. `q = tanh(u)` keeps the denominator positive; the
/// reported diagnostics covariance is in the fitted (transformed)
/// parameters `(√b, a, u, c)`.
pub fn fit_angle_map(map: &CoincidenceMap) -> Result<(AngleFitParams, UncertaintyEstimate)> {
    let n = check_map(map)?;
    let scale = map.included().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::DegenerateFit("map has no signal".into()));
    }
    let pts: Vec<(f64, f64)> = map.included().map(|(a, b, v)| (a - b, v / scale)).collect();

    // Seeds from the Δθ marginal (mean along wrapped diagonals).
    let mut marg = vec![(0.0, 0usize); n];
    for i in 0..n {
        for j in 0..n {
            if !map.is_excluded(i, j) {
                let e = &mut marg[(i + n - j) % n];
                e.0 += map.net(i, j) / scale;
                e.1 += 1;
            }
        }
    }
    let marg: Vec<f64> = marg
        .iter()
        .map(|&(s, c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    let finite: Vec<f64> = marg.iter().cloned().filter(|v| v.is_finite()).collect();
    let hi = finite.iter().cloned().fold(f64::MIN, f64::max);
    let lo = finite.iter().cloned().fold(f64::MAX, f64::min);
    let peak_m = argmax(
        &marg
            .iter()
            .map(|v| if v.is_finite() { *v } else { f64::MIN })
            .collect::<Vec<_>>(),
    );
    let step = 2.0 * PI / n as f64;
    let c0 = wrap_angle(peak_m as f64 * step);
    let ratio = if lo > 0.0 { hi / lo } else { 10.0 };
    let r23 = ratio.powf(2.0 / 3.0);
    let q_mag = ((r23 - 1.0) / (r23 + 1.0)).clamp(0.05, 0.9);
    let b0 = ((hi - lo.max(0.0)) * (1.0 - q_mag).powf(1.5)).max(1e-3);
    let x0 = [b0.sqrt(), lo.max(0.0), (-q_mag).atanh(), c0];

    let decode = |u: &[f64]| AngleFitParams {
        b: u[0] * u[0],
        a: u[1],
        q: u[2].tanh(),
        c: u[3],
    };
    let residuals = |u: &[f64]| -> Vec<f64> {
        let p = decode(u);
        pts.iter().map(|&(d, v)| p.model(d) - v).collect()
    };
    let fit = levenberg_marquardt(residuals, &x0)?;
    let mut p = decode(&fit.params);
    p.c = wrap_angle(p.c);
    if p.c.abs() > PI / 2.0 {
        p.q = -p.q;
        p.c = wrap_angle(p.c + PI);
    }
    let params = AngleFitParams {
        b: p.b * scale,
        a: p.a * scale,
        ..p
    };
    let data_norm = pts.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
    let diag = diagnostics(
        &fit,
        vec!["b", "a", "q", "c"],
        vec![params.b, params.a, params.q, params.c],
        data_norm,
        fit.covariance.clone(),
    );
    let est = UncertaintyEstimate::fitted(params.conditional_sigma(), Unit::Angle, None, diag);
    Ok((params, est))
}
