//! Small numerical helpers shared by the estimators.

use std::f64::consts::PI;

use crate::distribution::UniformGrid;

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y >= PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Standard deviation of a sampled density on a periodic angle grid, taken
/// about its peak: offsets are recentred to `[peak-π, peak+π)` and only
/// offsets with `|offset| <= half_window` contribute.
pub fn circular_sd_about_peak(grid: &UniformGrid, values: &[f64], half_window: f64) -> f64 {
    let peak = grid.value(argmax(values));
    let (mut mass, mut second) = (0.0, 0.0);
    for (theta, &v) in grid.values().zip(values) {
        let d = wrap_angle(theta - peak);
        if d.abs() <= half_window {
            mass += v;
            second += v * d * d;
        }
    }
    if mass > 0.0 {
        (second / mass).sqrt()
    } else {
        0.0
    }
}

/// L1 distance between two densities after normalizing each to unit sum.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    a.iter().zip(b).map(|(x, y)| (x / sa - y / sb).abs()).sum()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
