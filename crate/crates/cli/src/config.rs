//! Run configuration: defaults, optional TOML file, command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vmnet_core::arrivals::{DeltaRule, IntensityParams};
use vmnet_core::dataset::Format;
use vmnet_core::network::{NodeSet, SimulationConfig};
use vmnet_core::rates::{CirParams, TimeGrid};

use crate::error::{CliError, Result};

pub const OUTPUT_ROOT_ENV: &str = "VMNET_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cir: CirParams,
    pub intensity: IntensityParams,
    pub nodes: usize,
    pub hubs: usize,
    pub years: f64,
    pub seed: u64,
    pub bond_paths: usize,
    pub delta_rule: DeltaRule,
    pub lookback: usize,
    pub steps_ahead: usize,
    pub split: f64,
    pub n_sims: usize,
    pub repeats: usize,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_root: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cir: CirParams::default(),
            intensity: IntensityParams::default(),
            nodes: 5,
            hubs: 2,
            years: 60.0,
            seed: 1,
            bond_paths: 10_000,
            delta_rule: DeltaRule::Coin,
            lookback: 5,
            steps_ahead: 2,
            split: 0.8,
            n_sims: 1000,
            repeats: 1,
            format: Format::Binary,
            output_root: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let grid = TimeGrid::from_years(self.years)?;
        let cfg = SimulationConfig {
            cir: self.cir,
            intensity: self.intensity,
            nodes: NodeSet::new(self.nodes, self.hubs)?,
            n_days: grid.n_days,
            bond_paths: self.bond_paths,
            delta_rule: self.delta_rule,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Output root from the config, else the environment, else `vmnet-output`.
    pub fn output_root(&self) -> PathBuf {
        self.output_root
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("vmnet-output"))
    }

    /// The effective configuration without machine-specific paths.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_root = None;
        serde_json::to_value(c).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_parameters() {
        let c = RunConfig::default();
        assert_eq!((c.cir.kappa, c.cir.theta, c.cir.sigma, c.cir.r0), (0.6, 0.04, 0.14, 0.04));
        let i = c.intensity;
        assert_eq!((i.gamma, i.eta, i.theta_int, i.beta), (3.0, -4.0, 20.0, 5.0));
        assert_eq!((c.lookback, c.split), (5, 0.8));
        assert_eq!(c.simulation().unwrap().n_days, 60 * 365);
    }

    #[test]
    fn file_values_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.toml");
        std::fs::write(&p, "nodes = 3\nformat = \"csv\"\n[intensity]\ngamma = 7.5\n").unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.nodes, 3);
        assert_eq!(c.format, Format::Csv);
        assert_eq!(c.intensity.gamma, 7.5);
        assert_eq!(c.intensity.beta, 5.0);
        std::fs::write(&p, "nodez = 3\n").unwrap();
        assert_eq!(RunConfig::load(Some(&p)).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn invalid_values_are_validation_errors() {
        let c = RunConfig {
            intensity: IntensityParams {
                gamma: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(c.simulation().unwrap_err().exit_code(), 2);
    }
}
