use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StereoSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Colour normalisation and crop size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub crop_h: usize,
    pub crop_w: usize,
}

impl Default for PreprocessConfig {
    /// ImageNet statistics with a 384×768 crop.
    fn default() -> Self {
        PreprocessConfig {
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
            crop_h: 384,
            crop_w: 768,
        }
    }
}

impl PreprocessConfig {
    /// 256×1024 crop for sparse driving datasets.
    pub fn kitti() -> Self {
        PreprocessConfig {
            crop_h: 256,
            crop_w: 1024,
            ..Self::default()
        }
    }

    pub fn desk() -> Self {
        PreprocessConfig {
            crop_h: 64,
            crop_w: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|&s| !(s.is_finite() && s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("preprocess mean must be finite and std positive".into()));
        }
        if self.crop_h == 0 || self.crop_w == 0 {
            return Err(Error::Config("crop size must be positive".into()));
        }
        Ok(())
    }
}

fn check_channels(op: &'static str, img: &Tensor<f32>) -> Result<()> {
    if img.shape().c != 3 {
        return Err(Error::dim(op, "channels", 3, img.shape().c));
    }
    Ok(())
}

/// Per-channel `(x - mean) / std`.
pub fn normalize_colors(img: &Tensor<f32>, cfg: &PreprocessConfig) -> Result<Tensor<f32>> {
    check_channels("normalize_colors", img)?;
    let mut out = img.clone();
    let s = out.shape();
    for n in 0..s.n {
        for c in 0..3 {
            let (m, sd) = (cfg.mean[c], cfg.std[c]);
            for v in out.plane_mut(n, c) {
                *v = ((*v as f64 - m) / sd) as f32;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`normalize_colors`].
pub fn denormalize_colors(img: &Tensor<f32>, cfg: &PreprocessConfig) -> Result<Tensor<f32>> {
    check_channels("denormalize_colors", img)?;
    let mut out = img.clone();
    let s = out.shape();
    for n in 0..s.n {
        for c in 0..3 {
            let (m, sd) = (cfg.mean[c], cfg.std[c]);
            for v in out.plane_mut(n, c) {
                *v = (*v as f64 * sd + m) as f32;
            }
        }
    }
    Ok(out)
}

/// Draws a crop offset `(y, x)` for a `crop_h × crop_w` window.
pub fn crop_offset<R: Rng>(h: usize, w: usize, crop_h: usize, crop_w: usize, rng: &mut R) -> Result<(usize, usize)> {
    if crop_h > h || crop_w > w {
        return Err(Error::Contract(format!("crop {crop_h}x{crop_w} exceeds image {h}x{w}")));
    }
    Ok((rng.gen_range(0..=h - crop_h), rng.gen_range(0..=w - crop_w)))
}

/// Crops left, right and ground truth with one shared random offset.
pub fn random_crop_pair(sample: &StereoSample, cfg: &PreprocessConfig, seed: u64) -> Result<StereoSample> {
    random_crop_pair_with(sample, cfg.crop_h, cfg.crop_w, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn random_crop_pair_with<R: Rng>(sample: &StereoSample, crop_h: usize, crop_w: usize, rng: &mut R) -> Result<StereoSample> {
    let s = sample.left.shape();
    let (y, x) = crop_offset(s.h, s.w, crop_h, crop_w, rng)?;
    sample.crop(y, x, crop_h, crop_w)
}
