//! Top-level experiment configuration.

use serde::{Deserialize, Serialize};

use crate::data::DisparityField;
use crate::error::{Error, Result};
use crate::network::NetworkConfig;
use crate::train::TrainConfig;

/// Synthetic dataset used when no manifest is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataConfig {
    pub train_samples: usize,
    pub test_samples: usize,
    pub height: usize,
    pub width: usize,
    pub max_disparity: f64,
    pub objects: usize,
    pub seed: u64,
}

impl Default for SyntheticDataConfig {
    fn default() -> Self {
        SyntheticDataConfig {
            train_samples: 200,
            test_samples: 40,
            height: 64,
            width: 128,
            max_disparity: 12.0,
            objects: 2,
            seed: 7,
        }
    }
}

impl SyntheticDataConfig {
    pub fn field(&self) -> DisparityField {
        DisparityField::Layered {
            min: 0.0,
            max: self.max_disparity,
            objects: self.objects,
        }
    }

    /// Seed of generated sample `i`; test samples use a disjoint range.
    pub fn sample_seed(&self, i: usize, test: bool) -> u64 {
        let base = self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        base.wrapping_add(i as u64).wrapping_add(if test { 1 << 40 } else { 0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_samples == 0 {
            return Err(Error::Config("data.train_samples must be positive".into()));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("data.height and data.width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub data: SyntheticDataConfig,
}

impl RunConfig {
    /// 64×128 stereograms, 8 base channels, abbreviated rounds.
    pub fn desk() -> Self {
        RunConfig {
            network: NetworkConfig::desk(),
            train: TrainConfig::desk(),
            data: SyntheticDataConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        self.data.validate()
    }
}
