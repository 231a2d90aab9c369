use std::path::Path;
use std::time::Instant;

use disparity_core::stereo::{correlation, warp_by_disparity, CorrelationConfig, Normalization, ShiftMode};
use disparity_core::tensor::kernels::conv2d;
use disparity_core::{Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::BenchKernel;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub kernel: String,
    pub shape: [usize; 4],
    pub reps: usize,
    pub warmup: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    /// Nominal multiply-accumulates of the direct (unfactored) formulation.
    pub macs: u64,
    pub gmacs_per_s: f64,
}

pub fn parse_shape(spec: &str) -> CliResult<Shape> {
    let dims: Vec<usize> = spec
        .split(['x', 'X', ','])
        .map(|d| d.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("invalid shape {spec:?}; expected NxCxHxW")))?;
    let [n, c, h, w] = dims[..] else {
        return Err(CliError::usage(format!("shape {spec:?} must have four dimensions")));
    };
    if n * c * h * w == 0 {
        return Err(CliError::usage(format!("shape {spec:?} has a zero dimension")));
    }
    Ok(Shape::new(n, c, h, w))
}

/// Times one kernel. Point-wise correlation is timed as the `k = 0`
/// correlation of already pre-convolved features.
pub fn bench_kernel(
    kernel: BenchKernel,
    shape: Shape,
    reps: usize,
    warmup: usize,
    max_range: usize,
    kernel_half_size: usize,
) -> CliResult<BenchReport> {
    if reps == 0 {
        return Err(CliError::usage("reps must be at least 1"));
    }
    if shape.numel() == 0 {
        return Err(CliError::usage(format!("shape {shape} is empty")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = Tensor::<f32>::rand_uniform(shape, -1.0, 1.0, &mut rng);
    let b = Tensor::<f32>::rand_uniform(shape, -1.0, 1.0, &mut rng);
    let (n, c, h, w) = (shape.n as u64, shape.c as u64, shape.h as u64, shape.w as u64);
    let corr_cfg = |k: usize| CorrelationConfig {
        kernel_half_size: k,
        max_range,
        shift_mode: ShiftMode::TwoSidedStride2,
        normalize: Normalization::ByChannelCount,
    };
    let mut run: Box<dyn FnMut() -> disparity_core::Result<()>> = match kernel {
        BenchKernel::PatchCorr | BenchKernel::PointwiseCorr => {
            let k = if kernel == BenchKernel::PatchCorr { kernel_half_size } else { 0 };
            let cfg = corr_cfg(k);
            cfg.validate()?;
            Box::new(move || correlation(&a, &b, &cfg).map(drop))
        }
        BenchKernel::Warp => {
            let d = Tensor::<f32>::rand_uniform(shape.with_c(1), 0.0, shape.w as f64 / 4.0, &mut rng);
            Box::new(move || warp_by_disparity(&a, &d).map(drop))
        }
        BenchKernel::Conv2d => {
            let wt = Tensor::<f32>::rand_uniform([shape.c, shape.c, 3, 3], -0.1, 0.1, &mut rng);
            Box::new(move || conv2d(&a, &wt, None, 1, 1).map(drop))
        }
    };
    let macs = match kernel {
        BenchKernel::PatchCorr | BenchKernel::PointwiseCorr => {
            let k = if kernel == BenchKernel::PatchCorr { kernel_half_size as u64 } else { 0 };
            n * corr_cfg(0).num_shifts() as u64 * h * w * c * (2 * k + 1).pow(2)
        }
        BenchKernel::Warp => n * c * h * w * 2,
        BenchKernel::Conv2d => n * c * h * w * c * 9,
    };
    for _ in 0..warmup {
        run()?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        run()?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / reps as f64;
    let min_ms = times.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BenchReport {
        kernel: format!("{kernel:?}"),
        shape: shape.dims(),
        reps,
        warmup,
        mean_ms,
        min_ms,
        macs,
        gmacs_per_s: macs as f64 / (mean_ms * 1e6),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run(
    kernel: BenchKernel,
    shape: &str,
    reps: usize,
    warmup: usize,
    max_range: usize,
    kernel_half_size: usize,
    manifest_path: Option<&Path>,
    argv: &[String],
) -> CliResult<()> {
    let manifest = RunManifest::start("bench", argv);
    let r = bench_kernel(kernel, parse_shape(shape)?, reps, warmup, max_range, kernel_half_size)?;
    println!(
        "kernel={} shape={}x{}x{}x{} reps={} warmup={} mean_ms={:.4} min_ms={:.4} macs={} gmacs_per_s={:.3}",
        r.kernel, r.shape[0], r.shape[1], r.shape[2], r.shape[3], r.reps, r.warmup, r.mean_ms, r.min_ms, r.macs, r.gmacs_per_s
    );
    match manifest_path {
        Some(p) => {
            let mut m = manifest;
            m.config = serde_json::to_value(&r).ok();
            m.write(p)
        }
        None => Ok(()),
    }
}
