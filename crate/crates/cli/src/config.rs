//! Declarative run configuration: one TOML document with a section per
//! subcommand. Flags override file values.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use gkw_core::corpus::SynthConfig;
use gkw_core::features::FeatureConfig;
use gkw_core::models::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub batch_size: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { batch_size: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Decision thresholds for bag-of-words prediction.
    pub alpha: Vec<f64>,
    /// Keywords drawn for spotting; `None` uses the whole vocabulary.
    pub keywords: Option<usize>,
    /// Minimum reference occurrences for a drawn keyword.
    pub min_occurrences: usize,
    /// Seeded tie-shuffle trials averaged in spotting modes; 0 breaks ties
    /// by utterance id.
    pub tie_trials: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            alpha: vec![0.4, 0.7],
            keywords: None,
            min_occurrences: 5,
            tie_trials: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub strict_determinism: Option<bool>,
    pub precision: Option<Precision>,
    pub generate: SynthConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub score: ScoreConfig,
    pub eval: EvalConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("config {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", p.display(), e.message)))
            }
        }
    }
}
