//! Top-level configuration file (TOML). Every section is optional and
//! defaults to the reference parameter set; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::elevation::PerceptionConfig;
use crate::env::{EnvConfig, TrackerConfig};
use crate::error::{Error, Result};
use crate::prm::PrmConfig;
use crate::reward::RewardConfig;
use crate::sim::{SystemParams, TerminationParams};
use crate::terrain::TerrainConfig;
use crate::waypoints::CommandParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub system: SystemParams,
    pub terminations: TerminationParams,
    pub terrain: TerrainConfig,
    pub commands: CommandParams,
    pub perception: PerceptionConfig,
    pub rewards: RewardConfig,
    pub tracker: TrackerConfig,
    pub prm: PrmConfig,
    pub bench: BenchConfig,
}

impl Config {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.terrain.validate()?;
        self.commands.validate()?;
        self.perception.validate()?;
        self.rewards.validate()?;
        self.prm.validate()?;
        if (self.tracker.bar_length - self.system.bar_length).abs() > 1e-12 {
            return Err(Error::Config("tracker.bar_length must equal system.bar_length".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            system: self.system.clone(),
            terminations: TerminationParams {
                reach_radius: self.commands.reach_radius,
                ..self.terminations.clone()
            },
            rewards: self.rewards.clone(),
            perception: self.perception.clone(),
        }
    }
}
