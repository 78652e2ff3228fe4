//! TOML experiment configuration with strict key checking.

use perclab::lattice::{default_m, SimulationParams};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config key {key}: {message}")]
    Invalid { key: String, message: String },
}

pub(crate) fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub d: usize,
    pub n: i64,
    pub p: f64,
    pub seed: u64,
    pub samples: usize,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
    pub t_grid: Vec<f64>,
    /// Truncation level; 0 means the floor((ln n)^2) default.
    pub m: u32,
    /// Bypass window constant; 0 means the 8d default.
    pub c_star: u32,
    /// Box half-width; 0 means n plus the ceil(sqrt n) margin.
    pub side: i64,
    /// Noise multiples of the critical scale for the regime subcommand.
    pub betas: Vec<f64>,
    /// Endpoint separations for the scaling subcommands.
    pub n_list: Vec<i64>,
    pub oracle_sizes: Vec<usize>,
    pub oracle_instances: u64,
    /// Interior-edge budget for the radius tail.
    pub radius_edges: usize,
    /// Highest level the radius scan probes; edges are drawn from the region
    /// where every level up to the cap fits inside the box.
    pub radius_cap: u32,
    pub locality_trials: usize,
    pub animal_levels: Vec<u32>,
    pub animal_lengths: Vec<usize>,
    pub animal_q: f64,
    pub animal_dependence: u32,
    pub animal_samples: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 2,
            n: 64,
            p: 0.6,
            seed: 1,
            samples: 100,
            workers: 0,
            t_grid: vec![0.0, 0.001, 0.005, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            m: 0,
            c_star: 0,
            side: 0,
            betas: vec![0.1, 1.0, 10.0],
            n_list: vec![32, 64],
            oracle_sizes: vec![1, 2, 3, 4],
            oracle_instances: 5,
            radius_edges: 10_000,
            radius_cap: 5,
            locality_trials: 500,
            animal_levels: vec![1, 2, 3],
            animal_lengths: vec![4, 6, 8, 10, 12],
            animal_q: 0.25,
            animal_dependence: 2,
            animal_samples: 32,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(toml::from_str(&text)?)
    }

    /// Simulation parameters plus non-fatal warnings.
    pub fn to_params(&self) -> Result<(SimulationParams, Vec<String>), ConfigError> {
        if self.samples == 0 {
            return Err(invalid("samples", "must be positive"));
        }
        let mut params = SimulationParams::new(self.d, self.n, self.p, self.seed);
        params.samples = self.samples;
        params.t_grid = self.t_grid.clone();
        if self.m != 0 {
            params.m = self.m;
        }
        if self.c_star != 0 {
            params.c_star = self.c_star;
        }
        if self.side != 0 {
            params.side = self.side;
        }
        let param_warnings = params
            .validate()
            .map_err(|e| invalid("params", e.to_string()))?;
        let mut warnings: Vec<String> = param_warnings
            .iter()
            .map(|w| format!("{}: {}", w.key, w.message))
            .collect();
        if (params.c_star as usize) < 6 * self.d {
            warnings.push(format!(
                "c_star = {} is below the 6d = {} satisfiability threshold; radii will overflow",
                params.c_star,
                6 * self.d
            ));
        }
        Ok((params, warnings))
    }

    /// Effective truncation level after defaulting.
    pub fn effective_m(&self) -> u32 {
        if self.m != 0 {
            self.m
        } else {
            default_m(self.n)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg: RunConfig = toml::from_str("n = 16\np = 0.7\n").unwrap();
        assert_eq!(cfg.n, 16);
        assert_eq!(cfg.d, 2);
        assert_eq!(cfg.samples, 100);
        let (params, warnings) = cfg.to_params().unwrap();
        assert_eq!(params.c_star, 16);
        assert!(warnings.is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("samples = 10\nsample = 10\n").unwrap_err();
        assert!(err.to_string().contains("sample"));
    }

    #[test]
    fn out_of_range_p_names_the_key() {
        let cfg: RunConfig = toml::from_str("p = 1.5\n").unwrap();
        let err = cfg.to_params().unwrap_err();
        assert!(err.to_string().contains('p'), "{err}");
    }

    #[test]
    fn zero_samples_is_an_error() {
        let cfg: RunConfig = toml::from_str("samples = 0\n").unwrap();
        assert!(cfg.to_params().is_err());
    }

    #[test]
    fn small_c_star_warns_but_passes() {
        let cfg: RunConfig = toml::from_str("c_star = 4\n").unwrap();
        let (params, warnings) = cfg.to_params().unwrap();
        assert_eq!(params.c_star, 4);
        assert!(warnings.iter().any(|w| w.contains("threshold")));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            n: 24,
            p: 0.55,
            betas: vec![0.5, 2.0],
            ..RunConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
