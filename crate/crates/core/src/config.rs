//! TOML run configuration. Every command resolves one of these (file plus
//! command-line overrides) and writes it next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{ColumnMap, InputFormat, LoadOptions};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::loopsim::SimConfig;
use crate::model::{Hyperparams, LossKind};
use crate::sampler::SamplerConfig;
use crate::train::{TrainConfig, DEFAULT_PATIENCE};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw ratings file.
    pub input: Option<PathBuf>,
    pub format: InputFormat,
    pub columns: ColumnMap,
    pub skip_header: bool,
    /// Ratings at or above this value are positives.
    pub threshold: f64,
    pub split_seed: u64,
    /// Directory holding an ingested split.
    pub split_dir: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            format: InputFormat::Tsv,
            columns: ColumnMap::default(),
            skip_header: false,
            threshold: 4.0,
            split_seed: 0,
            split_dir: None,
        }
    }
}

impl DataConfig {
    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            format: self.format,
            columns: self.columns,
            skip_header: self.skip_header,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub patience: usize,
    /// Seeds for commands that repeat runs (sweep, simulate).
    pub seeds: Vec<u64>,
    /// Losses compared by `simulate`.
    pub sim_losses: Vec<LossKind>,
    pub data: DataConfig,
    pub model: Hyperparams,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: None,
            out_dir: None,
            patience: DEFAULT_PATIENCE,
            seeds: vec![0],
            sim_losses: vec![LossKind::Bpr, LossKind::Dpr],
            data: DataConfig::default(),
            model: Hyperparams::default(),
            sampler: SamplerConfig::default(),
            eval: EvalConfig::default(),
            sim: SimConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hp: self.model.clone(),
            sampler: self.sampler.clone(),
            patience: self.patience,
            ..TrainConfig::default()
        }
    }

    /// Simulation settings with the model and sampler sections filled in.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            hp: self.model.clone(),
            sampler: self.sampler.clone(),
            ..self.sim.clone()
        }
    }
}
