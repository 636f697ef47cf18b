//! Sampled joint distributions over two scalar coordinates.

use std::io::Write;

use crate::error::{Error, Result};

/// Uniform, strictly increasing grid `start + i·step`, `i = 0..len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    start: f64,
    step: f64,
    len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || !start.is_finite() || len < 2 {
            return Err(Error::ParameterDomain {
                name: "grid",
                reason: format!(
                    "need finite start, step > 0 and len >= 2 (got {start}, {step}, {len})"
                ),
            });
        }
        Ok(Self { start, step, len })
    }

    /// `len` points spanning `[-half_width, half_width]` inclusive.
    pub fn symmetric(half_width: f64, len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::ParameterDomain {
                name: "grid",
                reason: "need at least two points".into(),
            });
        }
        Self::new(-half_width, 2.0 * half_width / (len - 1) as f64, len)
    }

    /// `len` points over `[-π, π)`, endpoint excluded (periodic grid).
    pub fn periodic(len: usize) -> Result<Self> {
        use std::f64::consts::PI;
        Self::new(-PI, 2.0 * PI / len as f64, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.value(self.len - 1)
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.value(i))
    }

    /// Index of the grid point nearest to `x`, if inside the grid span.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let f = ((x - self.start) / self.step).round();
        (f >= 0.0 && f < self.len as f64).then_some(f as usize)
    }
}

/// Nonnegative values on `axis1 × axis2`, stored row-major over `axis1`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution2D {
    pub axis1: UniformGrid,
    pub axis2: UniformGrid,
    values: Vec<f64>,
    max_normalized: bool,
}

impl JointDistribution2D {
    pub fn new(axis1: UniformGrid, axis2: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != axis1.len() * axis2.len() {
            return Err(Error::ParameterDomain {
                name: "values",
                reason: format!(
                    "expected {} values, got {}",
                    axis1.len() * axis2.len(),
                    values.len()
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::ParameterDomain {
                name: "values",
                reason: format!("joint distribution values must be >= 0, found {v}"),
            });
        }
        Ok(Self {
            axis1,
            axis2,
            values,
            max_normalized: false,
        })
    }

    /// Scale so that the maximum value is exactly one.
    pub fn max_normalize(mut self) -> Self {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut self.values {
                *v /= max;
            }
        }
        self.max_normalized = true;
        self
    }

    pub fn is_max_normalized(&self) -> bool {
        self.max_normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.axis2.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.axis2.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Values along axis1 at fixed axis2 index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.axis1.len()).map(|i| self.get(i, j)).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// CSV with header `axis1,axis2,value`, row-major over axis1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis1", "axis2", "value"])?;
        for (i, a) in self.axis1.values().enumerate() {
            for (j, b) in self.axis2.values().enumerate() {
                w.write_record(&[a.to_string(), b.to_string(), self.get(i, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
