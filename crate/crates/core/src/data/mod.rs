//! Dataset formats, preprocessing and synthetic stereo pairs.

mod image;
mod manifest;
mod pfm;
mod preprocess;
mod stereogram;

use std::path::Path;

pub use image::{read_disparity_png16, read_image, write_disparity_png16, write_png_rgb, write_ppm, DISPARITY_PNG_SCALE};
pub use manifest::{Manifest, ManifestEntry};
pub use pfm::{read_pfm, read_pfm_channels, write_pfm};
pub use preprocess::{crop_offset, denormalize_colors, normalize_colors, random_crop_pair, random_crop_pair_with, PreprocessConfig};
pub use stereogram::{gen_random_dot_stereogram, gen_stereogram, DisparityField, Stereogram, Texture};

use crate::error::{Error, Result};
use crate::loss::ValidityMask;
use crate::tensor::Tensor;

/// A rectified pair with optional ground truth. Images are `1×3×H×W`,
/// disparity `1×1×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub left: Tensor<f32>,
    pub right: Tensor<f32>,
    pub gt: Option<Tensor<f32>>,
    pub source_id: String,
}

impl StereoSample {
    pub fn new(left: Tensor<f32>, right: Tensor<f32>, gt: Option<Tensor<f32>>, source_id: impl Into<String>) -> Result<Self> {
        let (l, r) = (left.shape(), right.shape());
        if l != r {
            return Err(Error::shape("StereoSample", format!("left {l} and right {r} differ")));
        }
        if l.n != 1 || l.c != 3 {
            return Err(Error::shape("StereoSample", format!("images must be 1x3xHxW, got {l}")));
        }
        if let Some(g) = &gt {
            if g.shape() != l.with_c(1) {
                return Err(Error::shape("StereoSample", format!("ground truth {} does not match images {l}", g.shape())));
            }
        }
        Ok(StereoSample {
            left,
            right,
            gt,
            source_id: source_id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.left.shape().h
    }

    pub fn width(&self) -> usize {
        self.left.shape().w
    }

    pub fn mask(&self) -> Option<ValidityMask> {
        self.gt.as_ref().map(ValidityMask::from_disparity)
    }

    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<StereoSample> {
        Ok(StereoSample {
            left: self.left.crop(y, x, h, w)?,
            right: self.right.crop(y, x, h, w)?,
            gt: self.gt.as_ref().map(|g| g.crop(y, x, h, w)).transpose()?,
            source_id: self.source_id.clone(),
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

pub fn load_image(path: &Path) -> Result<Tensor<f32>> {
    read_image(&read_file(path)?)
}

/// Loads a disparity map from `.pfm` or 16-bit `.png`. Missing PNG pixels
/// load as 0.
pub fn load_disparity(path: &Path) -> Result<Tensor<f32>> {
    let bytes = read_file(path)?;
    match extension(path).as_str() {
        "pfm" => Ok(read_pfm_channels(&bytes, 1)?.0),
        "png" => Ok(read_disparity_png16(&bytes)?.0),
        other => Err(Error::format(0, format!("{}: unsupported disparity extension {other:?}", path.display()))),
    }
}

/// Writes a disparity map as `.pfm` (little-endian) or 16-bit `.png`.
pub fn save_disparity(path: &Path, disp: &Tensor<f32>) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "pfm" => write_pfm(disp, -1.0)?,
        "png" => write_disparity_png16(disp)?,
        other => return Err(Error::Contract(format!("{}: unsupported disparity extension {other:?}", path.display()))),
    };
    Ok(std::fs::write(path, bytes)?)
}

/// Writes an image as `.png` or `.ppm`.
pub fn save_image(path: &Path, img: &Tensor<f32>) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "png" => write_png_rgb(img)?,
        "ppm" => write_ppm(img)?,
        other => return Err(Error::Contract(format!("{}: unsupported image extension {other:?}", path.display()))),
    };
    Ok(std::fs::write(path, bytes)?)
}

pub fn load_sample(entry: &ManifestEntry) -> Result<StereoSample> {
    let left = load_image(&entry.left)?;
    let right = load_image(&entry.right)?;
    let gt = entry.gt.as_deref().map(load_disparity).transpose()?;
    StereoSample::new(left, right, gt, entry.left.display().to_string())
}
