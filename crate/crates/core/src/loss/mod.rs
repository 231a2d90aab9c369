//! Smooth-L1 multi-scale supervision, the loss-weight schedule and
//! disparity evaluation metrics.

mod metrics;

use serde::{Deserialize, Serialize};

pub use metrics::{d1_rate, epe, Metric, D1_ABSOLUTE_PX, D1_RELATIVE};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tape, Tensor, Var};

/// Largest ground-truth disparity that counts as valid, in pixels.
pub const MAX_DISPARITY: f64 = 192.0;

/// Number of prediction scales, full resolution down to 1/64.
pub const NUM_SCALES: usize = 7;

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

#[inline]
fn smooth_l1_t<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    if x.abs() < T::one() {
        half * x * x
    } else {
        x.abs() - half
    }
}

/// Derivative of [`smooth_l1`].
#[inline]
fn smooth_l1_grad<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

/// Per-pixel validity of a disparity map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    shape: Shape,
    valid: Vec<bool>,
}

impl ValidityMask {
    /// A pixel is valid iff its ground truth is finite, positive and at
    /// most [`MAX_DISPARITY`].
    pub fn from_disparity<T: Scalar>(gt: &Tensor<T>) -> Self {
        let max = T::lit(MAX_DISPARITY);
        ValidityMask {
            shape: gt.shape(),
            valid: gt
                .data()
                .iter()
                .map(|&d| d.is_finite() && d > T::zero() && d <= max)
                .collect(),
        }
    }

    pub fn from_vec(shape: Shape, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != shape.numel() {
            return Err(Error::dim("ValidityMask", "element count", shape.numel(), valid.len()));
        }
        Ok(ValidityMask { shape, valid })
    }

    pub fn all(shape: Shape) -> Self {
        ValidityMask {
            shape,
            valid: vec![true; shape.numel()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }

    pub fn count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        if self.shape != other.shape {
            return Err(Error::shape("ValidityMask::and", format!("{} vs {}", self.shape, other.shape)));
        }
        Ok(ValidityMask {
            shape: self.shape,
            valid: self.valid.iter().zip(&other.valid).map(|(&a, &b)| a && b).collect(),
        })
    }

    fn expect_shape(&self, op: &'static str, shape: Shape) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(op, format!("mask shape {} does not match {}", self.shape, shape)));
        }
        Ok(())
    }
}

/// Masked mean of `smooth_l1(target - pred)`; zero when nothing is valid.
pub(crate) fn masked_smooth_l1<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>, mask: &[bool]) -> Result<T> {
    pred.expect_shape("scale_loss", target.shape())?;
    if mask.len() != pred.len() {
        return Err(Error::dim("scale_loss", "mask length", pred.len(), mask.len()));
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for ((&p, &t), &m) in pred.data().iter().zip(target.data()).zip(mask) {
        if m {
            acc += smooth_l1_t(t - p);
            count += 1;
        }
    }
    Ok(if count == 0 { T::zero() } else { acc / T::lit(count as f64) })
}

pub(crate) fn masked_smooth_l1_backward<T: Scalar>(g: T, pred: &Tensor<T>, target: &Tensor<T>, mask: &[bool]) -> Tensor<T> {
    let count = mask.iter().filter(|&&m| m).count();
    let mut out = Tensor::zeros(pred.shape());
    if count == 0 {
        return out;
    }
    let scale = g / T::lit(count as f64);
    for (i, d) in out.data_mut().iter_mut().enumerate() {
        if mask[i] {
            // d/dpred smooth(t - p) = -smooth'(t - p)
            *d = -smooth_l1_grad(target.data()[i] - pred.data()[i]) * scale;
        }
    }
    out
}

/// A loss or metric value, flagged when it was computed over no pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleLoss {
    pub value: f64,
    pub empty_mask: bool,
}

/// Mean smooth-L1 error over valid pixels at one scale.
pub fn scale_loss<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, mask: &ValidityMask) -> Result<ScaleLoss> {
    mask.expect_shape("scale_loss", pred.shape())?;
    let value = masked_smooth_l1(pred, gt, mask.as_slice())?;
    Ok(ScaleLoss {
        value: value.to_f64().unwrap_or(f64::NAN),
        empty_mask: mask.count() == 0,
    })
}

/// Ground truth and validity at every prediction scale.
#[derive(Debug, Clone)]
pub struct GtPyramid<T: Scalar> {
    pub levels: Vec<(Tensor<T>, ValidityMask)>,
}

impl<T: Scalar> GtPyramid<T> {
    /// Builds `NUM_SCALES` levels from full-resolution ground truth.
    ///
    /// Level `s` averages the valid full-resolution disparities in each
    /// `2^s × 2^s` block and divides by `2^s`, since disparity is measured
    /// in pixels of the current width. A coarse pixel is valid when more
    /// than half of its block is valid.
    pub fn build(gt: &Tensor<T>, mask: &ValidityMask) -> Result<Self> {
        Self::with_scales(gt, mask, NUM_SCALES)
    }

    pub fn with_scales(gt: &Tensor<T>, mask: &ValidityMask, scales: usize) -> Result<Self> {
        const OP: &str = "ground-truth pyramid";
        mask.expect_shape(OP, gt.shape())?;
        let s = gt.shape();
        if s.c != 1 {
            return Err(Error::dim(OP, "channel", 1, s.c));
        }
        let mut levels = Vec::with_capacity(scales);
        levels.push((gt.clone(), mask.clone()));
        for level in 1..scales {
            let f = 1usize << level;
            if !s.h.is_multiple_of(f) {
                return Err(Error::dim(OP, "height", s.h.next_multiple_of(f), s.h));
            }
            if !s.w.is_multiple_of(f) {
                return Err(Error::dim(OP, "width", s.w.next_multiple_of(f), s.w));
            }
            let shape = Shape::new(s.n, 1, s.h / f, s.w / f);
            let mut values = Vec::with_capacity(shape.numel());
            let mut valid = Vec::with_capacity(shape.numel());
            let inv_f = T::one() / T::lit(f as f64);
            for n in 0..s.n {
                for y in 0..shape.h {
                    for x in 0..shape.w {
                        let mut acc = T::zero();
                        let mut count = 0usize;
                        for dy in 0..f {
                            for dx in 0..f {
                                let (yy, xx) = (y * f + dy, x * f + dx);
                                if mask.valid[s.offset(n, 0, yy, xx)] {
                                    acc += gt.at(n, 0, yy, xx);
                                    count += 1;
                                }
                            }
                        }
                        let ok = 2 * count > f * f;
                        valid.push(ok);
                        values.push(if ok { acc / T::lit(count as f64) * inv_f } else { T::zero() });
                    }
                }
            }
            levels.push((Tensor::from_vec(shape, values)?, ValidityMask { shape, valid }));
        }
        Ok(GtPyramid { levels })
    }
}

/// Weighted multi-scale smooth-L1 loss recorded on the tape. Scales with
/// zero weight are not evaluated and receive no gradient.
pub fn multiscale_loss<T: Scalar>(tape: &mut Tape<T>, preds: &[Var], pyramid: &GtPyramid<T>, weights: &[f64]) -> Result<Var> {
    if preds.len() != pyramid.levels.len() {
        return Err(Error::dim("multiscale_loss", "scale count", pyramid.levels.len(), preds.len()));
    }
    if weights.len() != preds.len() {
        return Err(Error::dim("multiscale_loss", "weight count", preds.len(), weights.len()));
    }
    let mut terms = Vec::new();
    for ((&pred, (gt, mask)), &w) in preds.iter().zip(&pyramid.levels).zip(weights) {
        if w == 0.0 {
            continue;
        }
        mask.expect_shape("multiscale_loss", tape.shape(pred))?;
        let l = tape.smooth_l1_loss(pred, gt, mask.as_slice())?;
        terms.push((l, T::lit(w)));
    }
    tape.weighted_sum(&terms)
}

/// Plain-value counterpart of [`multiscale_loss`].
pub fn multiscale_loss_value<T: Scalar>(preds: &[Tensor<T>], pyramid: &GtPyramid<T>, weights: &[f64]) -> Result<f64> {
    if preds.len() != pyramid.levels.len() || weights.len() != preds.len() {
        return Err(Error::dim("multiscale_loss", "scale count", pyramid.levels.len(), preds.len()));
    }
    let mut total = 0.0;
    for ((pred, (gt, mask)), &w) in preds.iter().zip(&pyramid.levels).zip(weights) {
        if w != 0.0 {
            total += w * scale_loss(pred, gt, mask)?.value;
        }
    }
    Ok(total)
}

/// One training round: per-scale loss weights and an epoch budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRound {
    pub weights: [f64; NUM_SCALES],
    pub epochs: usize,
}

/// Coarse-to-fine sequence of loss-weight groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeightSchedule {
    pub rounds: Vec<LossRound>,
}

/// Per-scale weights of the four rounds, scale 0 first.
pub const ROUND_WEIGHTS: [[f64; NUM_SCALES]; 4] = [
    [0.32, 0.16, 0.08, 0.04, 0.02, 0.01, 0.005],
    [0.6, 0.32, 0.08, 0.04, 0.02, 0.01, 0.005],
    [0.8, 0.16, 0.04, 0.02, 0.01, 0.005, 0.0025],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
];

impl LossWeightSchedule {
    pub fn with_epochs(epochs: [usize; 4]) -> Self {
        LossWeightSchedule {
            rounds: ROUND_WEIGHTS
                .iter()
                .zip(epochs)
                .map(|(&weights, epochs)| LossRound { weights, epochs })
                .collect(),
        }
    }

    /// Abbreviated rounds for desk-scale runs.
    pub fn desk() -> Self {
        Self::with_epochs([5, 5, 5, 8])
    }

    pub fn total_epochs(&self) -> usize {
        self.rounds.iter().map(|r| r.epochs).sum()
    }
}

impl Default for LossWeightSchedule {
    fn default() -> Self {
        Self::with_epochs([20, 20, 20, 30])
    }
}
