use super::ValidityMask;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Outlier threshold in pixels.
pub const D1_ABSOLUTE_PX: f64 = 3.0;
/// Outlier threshold relative to the ground truth.
pub const D1_RELATIVE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub value: f64,
    pub valid_pixels: usize,
}

impl Metric {
    pub fn is_empty(&self) -> bool {
        self.valid_pixels == 0
    }
}

fn check<T: Scalar>(op: &'static str, pred: &Tensor<T>, gt: &Tensor<T>, mask: &ValidityMask) -> Result<()> {
    pred.expect_shape(op, gt.shape())?;
    if mask.shape() != gt.shape() {
        return Err(Error::shape(op, format!("mask shape {} does not match {}", mask.shape(), gt.shape())));
    }
    Ok(())
}

fn pairs<'a, T: Scalar>(
    pred: &'a Tensor<T>,
    gt: &'a Tensor<T>,
    mask: &'a ValidityMask,
    region: Option<&'a ValidityMask>,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    pred.data()
        .iter()
        .zip(gt.data())
        .enumerate()
        .filter(move |(i, _)| mask.as_slice()[*i] && region.is_none_or(|r| r.as_slice()[*i]))
        .map(|(_, (&p, &g))| (p.to_f64().unwrap_or(f64::NAN), g.to_f64().unwrap_or(f64::NAN)))
}

/// End-point error: mean absolute disparity error over valid pixels.
pub fn epe<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, mask: &ValidityMask) -> Result<Metric> {
    check("epe", pred, gt, mask)?;
    let (mut acc, mut count) = (0.0, 0usize);
    for (p, g) in pairs(pred, gt, mask, None) {
        acc += (p - g).abs();
        count += 1;
    }
    Ok(Metric {
        value: if count == 0 { 0.0 } else { acc / count as f64 },
        valid_pixels: count,
    })
}

/// Fraction of valid pixels (optionally restricted to `region`) whose error
/// exceeds both 3 px and 5 % of the ground truth.
pub fn d1_rate<T: Scalar>(pred: &Tensor<T>, gt: &Tensor<T>, mask: &ValidityMask, region: Option<&ValidityMask>) -> Result<Metric> {
    check("d1_rate", pred, gt, mask)?;
    if let Some(r) = region {
        if r.shape() != gt.shape() {
            return Err(Error::shape("d1_rate", "region shape does not match ground truth"));
        }
    }
    let (mut outliers, mut count) = (0usize, 0usize);
    for (p, g) in pairs(pred, gt, mask, region) {
        let err = (p - g).abs();
        if err > D1_ABSOLUTE_PX && err > D1_RELATIVE * g.abs() {
            outliers += 1;
        }
        count += 1;
    }
    Ok(Metric {
        value: if count == 0 { 0.0 } else { outliers as f64 / count as f64 },
        valid_pixels: count,
    })
}
