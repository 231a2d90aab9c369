//! Stereo matching operators: horizontal correlation cost volumes and
//! disparity-driven warping, each with an analytic backward rule.
//!
//! Shift convention: channel `i` of a cost volume compares `f1` at column
//! `x` with `f2` at column `x - shift[i]`, so a shift is a disparity
//! candidate for a left-reference pair (`f1` = left, `f2` = right).

mod correlation;
mod warp;

use serde::{Deserialize, Serialize};

pub use correlation::{correlation, correlation_backward, patch_correlation, pointwise_correlation, PreConv};
pub use warp::{warp_backward, warp_by_disparity};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    /// `{-D, -D+2, ..., D}`: `D + 1` channels.
    TwoSidedStride2,
    /// `{0, 1, ..., D-1}`: `D` channels.
    OneSidedStride1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    ByChannelCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Patch half-size `k`; the patch is `(2k+1) × (2k+1)`.
    pub kernel_half_size: usize,
    /// Maximum search range `D`.
    pub max_range: usize,
    pub shift_mode: ShiftMode,
    pub normalize: Normalization,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            kernel_half_size: 0,
            max_range: 20,
            shift_mode: ShiftMode::TwoSidedStride2,
            normalize: Normalization::ByChannelCount,
        }
    }
}

impl CorrelationConfig {
    pub fn shifts(&self) -> Vec<i32> {
        let d = self.max_range as i32;
        match self.shift_mode {
            ShiftMode::TwoSidedStride2 => (-d..=d).step_by(2).collect(),
            ShiftMode::OneSidedStride1 => (0..d).collect(),
        }
    }

    pub fn num_shifts(&self) -> usize {
        match self.shift_mode {
            ShiftMode::TwoSidedStride2 => self.max_range + 1,
            ShiftMode::OneSidedStride1 => self.max_range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_range == 0 {
            return Err(Error::Config("correlation max_range must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-pixel matching costs, one channel per candidate shift.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume<T: Scalar> {
    pub volume: Tensor<T>,
    pub shifts: Vec<i32>,
}

impl<T: Scalar> CostVolume<T> {
    /// Shift with the largest cost at every pixel of batch item `n`.
    pub fn argmax_shift(&self, n: usize, y: usize, x: usize) -> i32 {
        let mut best = 0;
        let mut best_v = T::neg_infinity();
        for (i, &s) in self.shifts.iter().enumerate() {
            let v = self.volume.at(n, i, y, x);
            if v > best_v {
                best_v = v;
                best = s;
            }
        }
        best
    }
}
