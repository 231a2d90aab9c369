//! Stereo disparity estimation building blocks: a small dense-tensor
//! engine with reverse-mode differentiation, horizontal correlation cost
//! volumes, disparity warping, residual encoder-decoder networks and
//! multi-scale supervised training.

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod network;
pub mod stereo;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Precision, Scalar, Shape, Tape, Tensor, Var};
