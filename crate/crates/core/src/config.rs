//! Run configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, NascarConfig, SampleScope};
use crate::error::{Error, Result};
use crate::gibbs::{FitOptions, InitScheme, PriorConfig};
use crate::metrics::StateEstimate;
use crate::model::{ModelConfig, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub variant: Variant,
    pub num_modes: usize,
    pub latent_dim: usize,
    /// Ignored by variants without explicit durations.
    #[serde(default = "default_max_duration")]
    pub max_duration: usize,
    #[serde(default = "default_true")]
    pub shared_emission: bool,
}

fn default_max_duration() -> usize {
    50
}

fn default_true() -> bool {
    true
}

impl ModelBlock {
    pub fn model_config(&self, obs_dim: usize) -> ModelConfig {
        let mut config = ModelConfig::for_variant(self.variant, self.num_modes, self.latent_dim, obs_dim, self.max_duration);
        config.shared_emission = self.shared_emission;
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_scheme")]
    pub scheme: InitScheme,
    /// Write checkpoints every this many sweeps; 0 writes only at the end.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Checkpoint directory; defaults to the output directory.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    #[serde(default)]
    pub estimate: StateEstimate,
}

fn default_iterations() -> usize {
    1000
}

fn default_burn_in() -> f64 {
    0.5
}

fn default_chains() -> usize {
    1
}

fn default_scheme() -> InitScheme {
    InitScheme::I
}

impl RunBlock {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            iterations: self.iterations,
            burn_in_fraction: self.burn_in_fraction,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceBlock {
    Nascar(NascarConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub source: SourceBlock,
    #[serde(default)]
    pub splits: Option<usize>,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub scope: SampleScope,
    #[serde(default)]
    pub standardize: bool,
    /// Seed for generation and chunk sampling; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub prior: PriorConfig,
    pub run: RunBlock,
    pub data: DataBlock,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        // Observation dimension is only known once data is loaded.
        self.model.model_config(1).validate()?;
        let run = &self.run;
        if run.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if run.chains == 0 {
            return Err(Error::Config("chains must be positive".into()));
        }
        if !(0.0..1.0).contains(&run.burn_in_fraction) {
            return Err(Error::Config("burn_in_fraction must lie in [0, 1)".into()));
        }
        let data = &self.data;
        if !(data.fraction > 0.0 && data.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", data.fraction)));
        }
        if data.splits == Some(0) {
            return Err(Error::Config("splits must be positive".into()));
        }
        if let SourceBlock::Nascar(generator) = &data.source {
            if !(generator.noise_scale >= 0.0) {
                return Err(Error::Config("noise_scale must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.run.seed)
    }
}
