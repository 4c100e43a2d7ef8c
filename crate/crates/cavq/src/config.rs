//! Experiment configuration files.
//!
//! A file names a base preset under `[scenario]` and overrides any field of
//! the remaining sections; everything it leaves out comes from the preset.
//!
//! ```toml
//! seed = 7
//!
//! [scenario]
//! preset = "scenario2"
//! vehicles = 6
//!
//! [sim]
//! time_headway = 3.0
//!
//! [rewards.combined]
//! fifo = 0.5
//!
//! [learner]
//! total_episodes = 100000
//! ```

use std::path::Path;

use cavq_core::harness::ScenarioPreset;
use cavq_core::{Approach, Framework, IntersectionConfig, LearnerConfig, RewardWeights, SimConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown preset `{0}` (expected scenario1 or scenario2)")]
    UnknownPreset(String),
    #[error(transparent)]
    Invalid(#[from] cavq_core::harness::HarnessError),
    #[error(transparent)]
    Learner(#[from] cavq_core::learner::LearnerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub preset: String,
    pub vehicles: usize,
    pub framework: Framework,
    /// Approach of each vehicle slot, as `SB`/`EB`/`NB`/`WB`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approaches: Option<Vec<Approach>>,
    /// Draw approaches uniformly at random, ignoring `approaches`.
    #[serde(default)]
    pub randomize_approaches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioSection,
    pub intersection: IntersectionConfig,
    pub sim: SimConfig,
    pub rewards: RewardWeights,
    pub learner: LearnerConfig,
}

impl ExperimentConfig {
    pub fn from_preset(preset: &ScenarioPreset) -> Self {
        Self {
            seed: 0,
            scenario: ScenarioSection {
                preset: preset.name.clone(),
                vehicles: preset.vehicles,
                framework: preset.framework,
                randomize_approaches: preset.approaches.is_none(),
                approaches: preset.approaches.clone(),
            },
            intersection: preset.intersection,
            sim: preset.sim,
            rewards: preset.weights,
            learner: preset.learner_config(),
        }
    }

    pub fn preset_named(name: &str) -> Result<Self, ConfigFileError> {
        ScenarioPreset::by_name(name)
            .map(|p| Self::from_preset(&p))
            .ok_or_else(|| ConfigFileError::UnknownPreset(name.to_string()))
    }

    /// Parses a config, filling unspecified fields from its base preset.
    pub fn parse(text: &str) -> Result<Self, ConfigFileError> {
        let user: toml::Table = text.parse()?;
        let preset = user
            .get("scenario")
            .and_then(|s| s.get("preset"))
            .and_then(|p| p.as_str())
            .unwrap_or("scenario1");
        let base = Self::preset_named(preset)?;
        let mut merged = toml::Table::try_from(&base)?;
        merge(&mut merged, user);
        let config: Self = merged.try_into()?;
        config.preset()?;
        config.learner.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigFileError> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// The validated scenario this config describes.
    pub fn preset(&self) -> Result<ScenarioPreset, ConfigFileError> {
        let approaches = if self.scenario.randomize_approaches {
            None
        } else {
            self.scenario.approaches.clone()
        };
        let preset = ScenarioPreset {
            name: self.scenario.preset.clone(),
            intersection: self.intersection,
            sim: self.sim,
            weights: self.rewards,
            vehicles: self.scenario.vehicles,
            framework: self.scenario.framework,
            total_episodes: self.learner.total_episodes,
            approaches,
        };
        preset.validate()?;
        Ok(preset)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
