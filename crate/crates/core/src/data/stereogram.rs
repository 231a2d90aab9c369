//! Random-dot stereograms with exactly known disparity.
//!
//! The right view is a random texture whose 8-bit values are all even, so
//! the midpoint of two neighbours is again an 8-bit value. The left view
//! is sampled from the right at `x - d(x)`, which makes
//! `warp_by_disparity(right, gt)` reproduce the left view on every visible
//! pixel. Pixels hidden in the right view are refilled with noise and get
//! ground truth 0, which the validity rule treats as missing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StereoSample;
use crate::error::{Error, Result};
use crate::loss::ValidityMask;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisparityField {
    Constant(f64),
    /// A tilted background plane plus `objects` fronto-parallel rectangles,
    /// all quantised to half pixels within `[min, max]`.
    Layered { min: f64, max: f64, objects: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    /// Square dots of random colour.
    RandomDots { dot_size: usize },
    /// Horizontal intensity ramp, identical in every row.
    Ramp,
}

impl Default for Texture {
    fn default() -> Self {
        Texture::RandomDots { dot_size: 2 }
    }
}

/// A generated pair plus the pixels visible in both views.
#[derive(Debug, Clone)]
pub struct Stereogram {
    pub sample: StereoSample,
    pub field: Tensor<f32>,
    pub visible: ValidityMask,
}

fn half_pixel(d: f64) -> bool {
    (2.0 * d).fract() == 0.0
}

fn quantize(d: f64, lo: f64, hi: f64) -> f64 {
    ((2.0 * d).round() / 2.0).clamp(lo, hi)
}

impl DisparityField {
    pub fn max_value(&self) -> f64 {
        match *self {
            DisparityField::Constant(d) => d,
            DisparityField::Layered { max, .. } => max,
        }
    }

    fn validate(&self, w: usize) -> Result<()> {
        let (lo, hi) = match *self {
            DisparityField::Constant(d) => (d, d),
            DisparityField::Layered { min, max, .. } => (min, max),
        };
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Contract(format!("disparity range [{lo}, {hi}] is invalid")));
        }
        if !half_pixel(lo) || !half_pixel(hi) {
            return Err(Error::Contract(format!("disparity bounds {lo}, {hi} must be multiples of 0.5")));
        }
        if 4.0 * hi >= w as f64 {
            return Err(Error::Contract(format!("maximum disparity {hi} must be below width/4 = {}", w as f64 / 4.0)));
        }
        Ok(())
    }

    fn render<R: Rng>(&self, h: usize, w: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            DisparityField::Constant(d) => vec![d; h * w],
            DisparityField::Layered { min, max, objects } => {
                let span = max - min;
                let base = rng.gen_range(min..=max);
                let gx = rng.gen_range(-0.5..=0.5) * span;
                let gy = rng.gen_range(-0.5..=0.5) * span;
                let mut field: Vec<f64> = (0..h * w)
                    .map(|i| {
                        let (y, x) = (i / w, i % w);
                        let u = x as f64 / w as f64 - 0.5;
                        let v = y as f64 / h as f64 - 0.5;
                        quantize(base + gx * u + gy * v, min, max)
                    })
                    .collect();
                for _ in 0..objects {
                    let oh = rng.gen_range(h / 8..=h / 2).max(1);
                    let ow = rng.gen_range(w / 8..=w / 3).max(1);
                    let y0 = rng.gen_range(0..=h - oh);
                    let x0 = rng.gen_range(0..=w - ow);
                    let d = quantize(rng.gen_range(min..=max), min, max);
                    for y in y0..y0 + oh {
                        for v in &mut field[y * w + x0..y * w + x0 + ow] {
                            // nearer surfaces win
                            *v = v.max(d);
                        }
                    }
                }
                field
            }
        }
    }
}

fn even_u8<R: Rng>(rng: &mut R) -> u8 {
    rng.gen_range(0..128u8) * 2
}

fn render_texture<R: Rng>(texture: Texture, h: usize, w: usize, rng: &mut R) -> Result<Vec<u8>> {
    let mut img = vec![0u8; 3 * h * w];
    match texture {
        Texture::RandomDots { dot_size } => {
            if dot_size == 0 {
                return Err(Error::Contract("dot_size must be positive".into()));
            }
            let (bh, bw) = (h.div_ceil(dot_size), w.div_ceil(dot_size));
            let dots: Vec<u8> = (0..3 * bh * bw).map(|_| even_u8(rng)).collect();
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        img[(c * h + y) * w + x] = dots[(c * bh + y / dot_size) * bw + x / dot_size];
                    }
                }
            }
        }
        Texture::Ramp => {
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        img[(c * h + y) * w + x] = (((x * 2 + c * 40) % 128) * 2) as u8;
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Generates a stereogram with random-dot texture.
pub fn gen_random_dot_stereogram(h: usize, w: usize, field: &DisparityField, seed: u64) -> Result<StereoSample> {
    Ok(gen_stereogram(h, w, field, Texture::default(), seed)?.sample)
}

pub fn gen_stereogram(h: usize, w: usize, field: &DisparityField, texture: Texture, seed: u64) -> Result<Stereogram> {
    if h == 0 || w == 0 {
        return Err(Error::Contract(format!("stereogram size {h}x{w} is empty")));
    }
    field.validate(w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disp = field.render(h, w, &mut rng);
    if let Some(&bad) = disp.iter().find(|d| !half_pixel(**d)) {
        return Err(Error::Contract(format!("disparity {bad} is not a multiple of 0.5")));
    }
    let right = render_texture(texture, h, w, &mut rng)?;
    let mut left = vec![0u8; 3 * h * w];
    let mut gt = vec![0f32; h * w];
    let mut visible = vec![false; h * w];
    for y in 0..h {
        let row = &disp[y * w..(y + 1) * w];
        // smallest target column among pixels to the right
        let mut suffix_min = f64::INFINITY;
        let mut occluded = vec![false; w];
        for x in (0..w).rev() {
            let target = x as f64 - row[x];
            occluded[x] = suffix_min <= target;
            suffix_min = suffix_min.min(target);
        }
        for x in 0..w {
            let src = x as f64 - row[x];
            let (x0, x1) = (src.floor(), src.ceil());
            let i = y * w + x;
            if x0 < 0.0 || occluded[x] {
                for c in 0..3 {
                    left[(c * h + y) * w + x] = even_u8(&mut rng);
                }
                continue;
            }
            let (x0, x1) = (x0 as usize, x1 as usize);
            for c in 0..3 {
                let r = &right[(c * h + y) * w..];
                left[(c * h + y) * w + x] = ((r[x0] as u16 + r[x1] as u16) / 2) as u8;
            }
            gt[i] = row[x] as f32;
            visible[i] = true;
        }
    }
    let to_img = |bytes: &[u8]| Tensor::from_vec([1, 3, h, w], bytes.iter().map(|&b| b as f32 / 255.0).collect());
    let shape = Shape::new(1, 1, h, w);
    Ok(Stereogram {
        sample: StereoSample::new(to_img(&left)?, to_img(&right)?, Some(Tensor::from_vec(shape, gt)?), format!("stereogram-{seed}"))?,
        field: Tensor::from_vec(shape, disp.iter().map(|&d| d as f32).collect())?,
        visible: ValidityMask::from_vec(shape, visible)?,
    })
}
