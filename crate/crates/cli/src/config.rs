use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use epr_revival::turbulence::{MonteCarloSettings, TurbulenceParams};
use epr_revival::{derive_params, ExperimentParams};

use crate::UsageError;

/// Keys a config file may set, with their paper defaults. `None` marks keys
/// that are required whenever a config file is given.
const KEYS: &[(&str, Option<&str>)] = &[
    ("w0_um", None),
    ("L_mm", None),
    ("lambda_p_nm", None),
    ("delta_l", Some("0.72")),
    ("delta_l_turbulent", Some("0.94")),
    ("delta_p_per_mm", Some("1.97")),
    ("d_cm", Some("15")),
    ("r_mm", Some("0.125")),
    ("sigma_r_um", Some("auto")),
    ("z_min_cm", Some("0.1")),
    ("z_max_cm", Some("100")),
    ("scan_points", Some("48")),
    ("n_theta", Some("256")),
    ("n_radial", Some("256")),
    ("realizations", Some("20000")),
    ("pairs_per_realization", Some("256")),
    ("seed", Some("24301")),
    ("half_window_rad", Some("3.141592653589793")),
    ("l_max", Some("15")),
];

const PAPER: &[(&str, &str)] = &[("w0_um", "507"), ("L_mm", "5"), ("lambda_p_nm", "355")];

/// Flat `key = value` configuration with `#` comments.
#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn paper() -> Self {
        let mut values: BTreeMap<String, String> = PAPER
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        for (k, v) in KEYS {
            if let Some(v) = v {
                values.insert(k.to_string(), v.to_string());
            }
        }
        Self { values }
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::paper()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                UsageError(format!("config line {}: expected key = value", n + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(known, _)| *known == k) {
                return Err(UsageError(format!("config line {}: unknown key `{k}`", n + 1)).into());
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(
                    UsageError(format!("config line {}: duplicate key `{k}`", n + 1)).into(),
                );
            }
        }
        for (k, default) in KEYS {
            match default {
                None if !values.contains_key(*k) => {
                    return Err(UsageError(format!("missing required config key `{k}`")).into())
                }
                Some(d) => {
                    values.entry(k.to_string()).or_insert_with(|| d.to_string());
                }
                None => {}
            }
        }
        Ok(Self { values })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        self.raw(key).parse().map_err(|_| {
            UsageError(format!(
                "config key `{key}`: `{}` is not a number",
                self.raw(key)
            ))
            .into()
        })
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.raw(key).parse().map_err(|_| {
            UsageError(format!(
                "config key `{key}`: `{}` is not a count",
                self.raw(key)
            ))
            .into()
        })
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.raw(key).parse().map_err(|_| {
            UsageError(format!(
                "config key `{key}`: `{}` is not an integer",
                self.raw(key)
            ))
            .into()
        })
    }

    pub fn params(&self) -> Result<ExperimentParams> {
        derive_params(
            self.f64("w0_um")? * 1e-6,
            self.f64("L_mm")? * 1e-3,
            self.f64("lambda_p_nm")? * 1e-9,
        )
        .context("invalid crystal/pump parameters")
    }

    /// Δp in ħ/m.
    pub fn delta_p(&self) -> Result<f64> {
        Ok(self.f64("delta_p_per_mm")? * 1e3)
    }

    pub fn z_range(&self) -> Result<(f64, f64)> {
        Ok((self.f64("z_min_cm")? * 1e-2, self.f64("z_max_cm")? * 1e-2))
    }

    pub fn turbulence(&self, params: &ExperimentParams) -> Result<TurbulenceParams> {
        let sigma_r = match self.raw("sigma_r_um") {
            "auto" => None,
            _ => Some(self.f64("sigma_r_um")? * 1e-6),
        };
        Ok(TurbulenceParams::new(
            params,
            self.f64("d_cm")? * 1e-2,
            self.f64("r_mm")? * 1e-3,
            sigma_r,
        )?)
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloSettings> {
        Ok(MonteCarloSettings {
            realizations: self.usize("realizations")?,
            pairs_per_realization: self.usize("pairs_per_realization")?,
            seed: self.u64("seed")?,
            n_theta: self.usize("n_theta")?,
        })
    }
}
