//! Shared helpers for integration tests, including an independent brute-force
//! evaluation of the turbulent two-photon intensity.
#![allow(dead_code)]

use num_complex::Complex64;

/// Small dimensionless instance: k = 1, w0 = 1, σ0 = 0.3.
pub const SMALL_W0: f64 = 1.0;
pub const SMALL_LAMBDA: f64 = std::f64::consts::PI;
pub const SMALL_LENGTH: f64 = 0.18 / 0.455;

pub fn small_params() -> epr_revival::ExperimentParams {
    epr_revival::derive_params(SMALL_W0, SMALL_LENGTH, SMALL_LAMBDA).unwrap()
}

/// Per-axis intensity of a biphoton that crosses a thin Gaussian coherence
/// plane at `d`, observed at `z`, evaluated by direct quadrature of the
/// four-fold (s1, i1, s2, i2) Fresnel integral on a uniform grid.
///
/// The full transverse intensity is the product of the x and y factors.
pub struct EightDimOracle {
    k: f64,
    lever: f64,
    nodes: Vec<f64>,
    /// `A[a][b]` with quadrature weights folded in.
    amp: Vec<Vec<Complex64>>,
    /// Coherence kernel `T[a][c]`.
    kernel: Vec<Vec<f64>>,
}

impl EightDimOracle {
    /// `r = None` disables the coherence plane.
    pub fn new(
        k: f64,
        w0: f64,
        sigma0: f64,
        d: f64,
        z: f64,
        r: Option<f64>,
        points: usize,
        half: f64,
    ) -> Self {
        let lever = z - d;
        let dx = 2.0 * half / (points - 1) as f64;
        let nodes: Vec<f64> = (0..points).map(|j| -half + j as f64 * dx).collect();
        let weight = |j: usize| {
            if j == 0 || j == points - 1 {
                0.5 * dx
            } else {
                dx
            }
        };
        // Sum and difference coordinates diffract with wavenumber k/2.
        let q_sum = Complex64::new(d, -k * w0 * w0);
        let q_diff = Complex64::new(d, -k * sigma0 * sigma0);
        let i = Complex64::i();
        let psi = |s: f64, t: f64| {
            let (r2, d2) = ((s + t).powi(2), (s - t).powi(2));
            (i * (0.5 * k) * r2 / (2.0 * q_sum)).exp() * (i * (0.5 * k) * d2 / (2.0 * q_diff)).exp()
        };
        let amp = (0..points)
            .map(|a| {
                (0..points)
                    .map(|b| {
                        let (s, t) = (nodes[a], nodes[b]);
                        let chirp = (i * k * (s * s + t * t) / (2.0 * lever)).exp();
                        psi(s, t) * chirp * weight(a) * weight(b)
                    })
                    .collect()
            })
            .collect();
        let kernel = (0..points)
            .map(|a| {
                (0..points)
                    .map(|c| match r {
                        Some(r) => (-(nodes[a] - nodes[c]).powi(2) / (2.0 * r * r)).exp(),
                        None => 1.0,
                    })
                    .collect()
            })
            .collect();
        Self {
            k,
            lever,
            nodes,
            amp,
            kernel,
        }
    }

    fn phases(&self, x: f64) -> Vec<Complex64> {
        self.nodes
            .iter()
            .map(|&n| Complex64::from_polar(1.0, -self.k * x * n / self.lever))
            .collect()
    }

    /// Signal-index matrix for a fixed idler coordinate `t`.
    pub fn idler_matrix(&self, t: f64) -> Vec<Vec<Complex64>> {
        let n = self.nodes.len();
        let u = self.phases(t);
        let b: Vec<Vec<Complex64>> = (0..n)
            .map(|a| (0..n).map(|j| self.amp[a][j] * u[j]).collect())
            .collect();
        // (B T B^H) ⊙ T
        let bt: Vec<Vec<Complex64>> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|e| (0..n).map(|j| b[a][j] * self.kernel[j][e]).sum())
                    .collect()
            })
            .collect();
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|c| {
                        let v: Complex64 = (0..n).map(|e| bt[a][e] * b[c][e].conj()).sum();
                        v * self.kernel[a][c]
                    })
                    .collect()
            })
            .collect()
    }

    /// Intensity at signal coordinate `s` for a precomputed idler matrix.
    pub fn intensity_with(&self, h: &[Vec<Complex64>], s: f64) -> f64 {
        let v = self.phases(s);
        let n = v.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..n {
            let row: Complex64 = (0..n).map(|c| h[a][c] * v[c].conj()).sum();
            acc += v[a] * row;
        }
        acc.re
    }

    pub fn intensity(&self, s: f64, t: f64) -> f64 {
        self.intensity_with(&self.idler_matrix(t), s)
    }

    /// θi = 0 slice of the angle distribution, averaged over each of the
    /// `n_theta` bins centred on `m·2π/n_theta`, normalized to unit sum.
    /// Radii run to `r_max` with `n_r` midpoint nodes.
    pub fn angle_slice(&self, n_theta: usize, r_max: f64, n_r: usize) -> Vec<f64> {
        const SUB: usize = 5;
        let dr = r_max / n_r as f64;
        let radii: Vec<f64> = (0..n_r).map(|j| (j as f64 + 0.5) * dr).collect();
        let h0 = self.idler_matrix(0.0);
        let idler: Vec<Vec<Vec<Complex64>>> =
            radii.iter().map(|&ri| self.idler_matrix(ri)).collect();
        let step = 2.0 * std::f64::consts::PI / n_theta as f64;
        let mut out: Vec<f64> = (0..n_theta)
            .map(|m| {
                let mut total = 0.0;
                for sub in 0..SUB {
                    let theta = (m as f64 + (sub as f64 + 0.5) / SUB as f64 - 0.5) * step;
                    for &rs in &radii {
                        let fy = self.intensity_with(&h0, rs * theta.sin());
                        let x = rs * theta.cos();
                        let inner: f64 = radii
                            .iter()
                            .zip(&idler)
                            .map(|(&ri, h)| ri * self.intensity_with(h, x))
                            .sum();
                        total += rs * fy * inner;
                    }
                }
                total
            })
            .collect();
        let sum: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= sum);
        out
    }
}

pub fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}
