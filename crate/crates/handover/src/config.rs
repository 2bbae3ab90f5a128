//! Toolkit configuration, read from a TOML file.
//!
//! Every table and key is optional; missing entries take the built-in
//! defaults. `handover config` prints the full default file.

use std::path::Path;

use handover_core::cospar::{GridSpec, PreferenceConfig};
use handover_core::dataset::GeneratorConfig;
use handover_core::generator::FlowFitConfig;
use handover_core::impedance::RolloutConfig;
use handover_core::SimilarityConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalConfig;
use crate::session::SessionConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: toml::de::Error },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub generator: GeneratorConfig,
    pub flow: FlowFitConfig,
    pub similarity: SimilarityConfig,
    pub prediction: PredictionSettings,
    pub rollout: RolloutConfig,
    pub grid: GridSpec,
    pub preference: PreferenceConfig,
    pub session: SessionConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictionSettings {
    pub k_neighbors: usize,
}

impl Default for PredictionSettings {
    fn default() -> Self {
        Self { k_neighbors: 10 }
    }
}

impl ToolkitConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse { path: path.display().to_string(), source })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
