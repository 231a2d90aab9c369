//! Residual encoder-decoder disparity networks.
//!
//! [`CorrNet`] maps a rectified pair to seven disparity maps `c_s` using a
//! Siamese encoder and a point-wise correlation layer. [`RefineNet`] takes
//! the pair, the warped right view and `c_0` and predicts signed residuals
//! `r_s`. [`StackedNet`] returns `d_s = c_s + r_s` for every scale.

mod blocks;
mod params;
mod rbnet;

use serde::{Deserialize, Serialize};

pub use blocks::{BlockKind, Conv, DownBlock, ResBlock, UpConv};
pub use params::{Bound, Initializer, ParamId, ParamStore};
pub use rbnet::{CorrNet, Decoder, Model, Prediction, RefineNet, StackOutput, StackedNet};

use crate::error::{Error, Result};
use crate::loss::NUM_SCALES;
use crate::stereo::{CorrelationConfig, ShiftMode};
use crate::tensor::{Scalar, Shape, Tensor};

/// Spatial dimensions must be multiples of this.
pub const SIZE_MULTIPLE: usize = 1 << (NUM_SCALES - 1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementInput {
    Left,
    Right,
    WarpedLeft,
    InitialDisparity,
    /// Per-pixel channel mean of `|left - warped_left|`.
    ReconstructionError,
}

impl RefinementInput {
    pub fn channels(self) -> usize {
        match self {
            RefinementInput::Left | RefinementInput::Right | RefinementInput::WarpedLeft => 3,
            RefinementInput::InitialDisparity | RefinementInput::ReconstructionError => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Full-resolution stem plus one downsampling block per further stage.
    pub encoder_stages: usize,
    pub base_channels: usize,
    /// Stage `i` has `min(base_channels · 2^i, max_channels)` channels.
    pub max_channels: usize,
    pub block: BlockKind,
    /// Index of the downsampling block whose output feeds the correlation.
    pub correlation_after_stage: usize,
    pub corr: CorrelationConfig,
    pub share_encoder_weights: bool,
    pub refinement_inputs: Vec<RefinementInput>,
    pub leaky_slope: f64,
    pub scales: usize,
    pub init_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            encoder_stages: NUM_SCALES,
            base_channels: 32,
            max_channels: 512,
            block: BlockKind::DualResBlock,
            correlation_after_stage: 3,
            corr: CorrelationConfig::default(),
            share_encoder_weights: true,
            refinement_inputs: vec![
                RefinementInput::Left,
                RefinementInput::Right,
                RefinementInput::WarpedLeft,
                RefinementInput::InitialDisparity,
            ],
            leaky_slope: 0.1,
            scales: NUM_SCALES,
            init_seed: 0x5eed,
        }
    }
}

impl NetworkConfig {
    /// Small network for 64×128 inputs used by tests and demos.
    pub fn desk() -> Self {
        NetworkConfig {
            base_channels: 8,
            max_channels: 64,
            correlation_after_stage: 2,
            corr: CorrelationConfig {
                max_range: 8,
                shift_mode: ShiftMode::OneSidedStride1,
                ..CorrelationConfig::default()
            },
            ..NetworkConfig::default()
        }
    }

    pub fn channels(&self, stage: usize) -> usize {
        (self.base_channels << stage.min(20)).min(self.max_channels)
    }

    pub fn refinement_channels(&self) -> usize {
        self.refinement_inputs.iter().map(|r| r.channels()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales != NUM_SCALES {
            return Err(Error::Config(format!("scales must be {NUM_SCALES}, got {}", self.scales)));
        }
        if self.encoder_stages != self.scales {
            return Err(Error::Config(format!(
                "encoder_stages must equal scales ({}), got {}",
                self.scales, self.encoder_stages
            )));
        }
        if self.correlation_after_stage == 0 || self.correlation_after_stage >= self.encoder_stages {
            return Err(Error::Config(format!(
                "correlation_after_stage must be in 1..{}, got {}",
                self.encoder_stages, self.correlation_after_stage
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config("need 0 < base_channels <= max_channels".into()));
        }
        if !self.leaky_slope.is_finite() || !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::Config(format!("leaky_slope must be in [0, 1), got {}", self.leaky_slope)));
        }
        if self.refinement_inputs.is_empty() {
            return Err(Error::Config("refinement_inputs is empty".into()));
        }
        for (i, r) in self.refinement_inputs.iter().enumerate() {
            if self.refinement_inputs[..i].contains(r) {
                return Err(Error::Config(format!("duplicate refinement input {r:?}")));
            }
        }
        self.corr.validate()
    }

    /// Checks that an input of this shape can pass through the network.
    pub fn check_input(&self, shape: Shape) -> Result<()> {
        if shape.c != 3 {
            return Err(Error::dim("network input", "channels", 3, shape.c));
        }
        for (axis, v) in [("height", shape.h), ("width", shape.w)] {
            if v == 0 || v % SIZE_MULTIPLE != 0 {
                return Err(Error::shape(
                    "network input",
                    format!("{axis} {v} is not a positive multiple of {SIZE_MULTIPLE}"),
                ));
            }
        }
        Ok(())
    }
}

/// Seven disparity maps, finest first; map `s` is `H/2^s × W/2^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleOutput<T: Scalar> {
    maps: Vec<Tensor<T>>,
}

impl<T: Scalar> MultiScaleOutput<T> {
    pub fn new(maps: Vec<Tensor<T>>) -> Result<Self> {
        if maps.len() != NUM_SCALES {
            return Err(Error::shape("multi-scale output", format!("expected {NUM_SCALES} maps, got {}", maps.len())));
        }
        let s0 = maps[0].shape();
        if s0.c != 1 {
            return Err(Error::dim("multi-scale output", "channels", 1, s0.c));
        }
        for (s, m) in maps.iter().enumerate() {
            let want = Shape::new(s0.n, 1, s0.h >> s, s0.w >> s);
            if m.shape() != want || (s0.h >> s) << s != s0.h || (s0.w >> s) << s != s0.w {
                return Err(Error::shape(
                    "multi-scale output",
                    format!("scale {s} has shape {}, expected {want}", m.shape()),
                ));
            }
        }
        Ok(MultiScaleOutput { maps })
    }

    pub fn scale(&self, s: usize) -> &Tensor<T> {
        &self.maps[s]
    }

    pub fn finest(&self) -> &Tensor<T> {
        &self.maps[0]
    }

    pub fn maps(&self) -> &[Tensor<T>] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<Tensor<T>> {
        self.maps
    }

    pub fn is_finite(&self) -> bool {
        self.maps.iter().all(|m| m.is_finite())
    }
}
