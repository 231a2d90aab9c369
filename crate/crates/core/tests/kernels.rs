mod common;

use common::{random, rel_err, rng};
use disparity_core::stereo::{self, CorrelationConfig, Normalization, PreConv, ShiftMode};
use disparity_core::tensor::kernels;
use disparity_core::{Error, Tensor};
use proptest::prelude::*;

#[test]
fn kernels_match_oracles_f32() {
    for (name, err) in common::kernel_suite::<f32>(24, 11) {
        assert!(err < common::kernel_tolerance::<f32>(), "{name}: {err:e}");
    }
}

#[test]
fn kernels_match_oracles_f64() {
    for (name, err) in common::kernel_suite::<f64>(24, 12) {
        assert!(err < common::kernel_tolerance::<f64>(), "{name}: {err:e}");
    }
}

#[test]
fn strided_padded_conv_example() {
    let mut g = rng(1);
    let x = random::<f64>([1, 2, 5, 5], &mut g);
    let w = random::<f64>([3, 2, 3, 3], &mut g);
    let got = kernels::conv2d(&x, &w, None, 2, 1).unwrap();
    assert_eq!(got.shape().dims(), [1, 3, 3, 3]);
    assert!(got.max_abs_diff(&common::conv2d(&x, &w, None, 2, 1)).unwrap() < 1e-6);
}

#[test]
fn conv_rejects_channel_mismatch() {
    let x = Tensor::<f32>::zeros([1, 3, 4, 4]);
    let w = Tensor::<f32>::zeros([2, 2, 3, 3]);
    assert!(matches!(kernels::conv2d(&x, &w, None, 1, 1), Err(Error::Dimension { .. })));
    assert!(kernels::conv2d(&x, &Tensor::zeros([2, 3, 3, 3]), None, 0, 1).is_err());
}

#[test]
fn leaky_relu_values() {
    let x = Tensor::<f64>::from_vec([1, 1, 1, 3], vec![-3.0, 0.0, 2.0]).unwrap();
    assert_eq!(kernels::leaky_relu(&x, 0.1).data(), &[-0.30000000000000004, 0.0, 2.0]);
}

#[test]
fn upsample_matches_interpolation_weights() {
    let mut g = rng(2);
    let x = random::<f64>([1, 1, 3, 3], &mut g);
    let up = kernels::bilinear_upsample2x(&x).unwrap();
    // Half-pixel centres: output i samples input (i + 0.5) / 2 - 0.5, edge clamped.
    let tap = |i: usize| {
        let s = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 2.0);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(2), s - i0 as f64)
    };
    for oy in 0..6 {
        for ox in 0..6 {
            let (y0, y1, fy) = tap(oy);
            let (x0, x1, fx) = tap(ox);
            let want = (1.0 - fy) * ((1.0 - fx) * x.at(0, 0, y0, x0) + fx * x.at(0, 0, y0, x1))
                + fy * ((1.0 - fx) * x.at(0, 0, y1, x0) + fx * x.at(0, 0, y1, x1));
            assert!((up.at(0, 0, oy, ox) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn avgpool_matches_block_mean() {
    let mut g = rng(3);
    let x = random::<f64>([1, 1, 8, 8], &mut g);
    let y = kernels::avgpool_downsample(&x, 4).unwrap();
    for by in 0..2 {
        for bx in 0..2 {
            let mut acc = 0.0;
            for yy in 0..4 {
                for xx in 0..4 {
                    acc += x.at(0, 0, by * 4 + yy, bx * 4 + xx);
                }
            }
            assert!((y.at(0, 0, by, bx) - acc / 16.0).abs() < 1e-12);
        }
    }
    assert!(kernels::avgpool_downsample(&Tensor::<f64>::zeros([1, 1, 6, 8]), 4).is_err());
}

#[test]
fn patch_correlation_example() {
    let mut g = rng(4);
    let f1 = random::<f64>([1, 3, 6, 10], &mut g);
    let f2 = random::<f64>([1, 3, 6, 10], &mut g);
    let cfg = CorrelationConfig {
        kernel_half_size: 1,
        max_range: 4,
        shift_mode: ShiftMode::TwoSidedStride2,
        normalize: Normalization::ByChannelCount,
    };
    let got = stereo::patch_correlation(&f1, &f2, &cfg).unwrap();
    assert_eq!(got.shifts, vec![-4, -2, 0, 2, 4]);
    assert!(got.volume.max_abs_diff(&common::correlation(&f1, &f2, &cfg)).unwrap() < 1e-5);
}

#[test]
fn pointwise_with_identity_preconv_equals_patch_k0() {
    let mut g = rng(5);
    let c = 4;
    let f1 = random::<f64>([1, c, 8, 8], &mut g);
    let f2 = random::<f64>([1, c, 8, 8], &mut g);
    let eye = Tensor::from_fn([c, c, 3, 3], |o, i, y, x| if o == i && y == 1 && x == 1 { 1.0 } else { 0.0 });
    let id = PreConv { weight: &eye, bias: None };
    let cfg = CorrelationConfig {
        kernel_half_size: 2,
        max_range: 6,
        shift_mode: ShiftMode::OneSidedStride1,
        normalize: Normalization::None,
    };
    let pw = stereo::pointwise_correlation(&f1, &f2, id, id, &cfg).unwrap();
    let k0 = stereo::patch_correlation(&f1, &f2, &CorrelationConfig { kernel_half_size: 0, ..cfg.clone() }).unwrap();
    assert_eq!(pw.volume, k0.volume);
    let oracle = common::pointwise_products(&f1, &f2, &cfg.shifts(), 1.0);
    assert!(pw.volume.max_abs_diff(&oracle).unwrap() < 1e-5);
}

#[test]
fn correlation_rejects_mismatched_pair() {
    let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
    let b = Tensor::<f32>::zeros([1, 3, 4, 4]);
    assert!(stereo::patch_correlation(&a, &b, &CorrelationConfig::default()).is_err());
    let cfg = CorrelationConfig { max_range: 0, ..Default::default() };
    assert!(stereo::patch_correlation(&a, &a, &cfg).is_err());
}

#[test]
fn warp_unit_shift_of_ramp() {
    let ramp = Tensor::<f64>::from_fn([1, 1, 2, 8], |_, _, _, x| x as f64);
    let out = stereo::warp_by_disparity(&ramp, &Tensor::ones([1, 1, 2, 8])).unwrap();
    for y in 0..2 {
        assert_eq!(out.at(0, 0, y, 0), 0.0);
        for x in 1..8 {
            assert_eq!(out.at(0, 0, y, x), x as f64 - 1.0);
        }
    }
}

#[test]
fn warp_fractional_matches_oracle() {
    let mut g = rng(6);
    let img = random::<f64>([1, 3, 5, 9], &mut g);
    let d = Tensor::full([1, 1, 5, 9], 2.5);
    let got = stereo::warp_by_disparity(&img, &d).unwrap();
    assert!(got.max_abs_diff(&common::warp(&img, &d)).unwrap() < 1e-6);
    assert!(stereo::warp_by_disparity(&img, &Tensor::zeros([1, 2, 5, 9])).is_err());
}

#[test]
fn cost_volume_peaks_at_true_shift() {
    let mut g = rng(7);
    let (h, w) = (6, 24);
    let f2 = random::<f64>([1, 8, h, w], &mut g);
    for t in [-4i32, -2, 0, 2, 4] {
        // f1(x) = f2(x - t)
        let f1 = Tensor::from_fn([1, 8, h, w], |n, c, y, x| {
            let src = x as i64 - t as i64;
            if (0..w as i64).contains(&src) { f2.at(n, c, y, src as usize) } else { 0.0 }
        });
        let cfg = CorrelationConfig {
            kernel_half_size: 1,
            max_range: 4,
            shift_mode: ShiftMode::TwoSidedStride2,
            normalize: Normalization::ByChannelCount,
        };
        let vol = stereo::patch_correlation(&f1, &f2, &cfg).unwrap();
        for y in 1..h - 1 {
            for x in 6..w - 6 {
                assert_eq!(vol.argmax_shift(0, y, x), t, "pixel ({y}, {x})");
            }
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let mut g = rng(8);
    let x = random::<f32>([2, 3, 7, 9], &mut g);
    let w = random::<f32>([4, 3, 3, 3], &mut g);
    let a = kernels::conv2d(&x, &w, None, 1, 1).unwrap();
    let b = kernels::conv2d(&x, &w, None, 1, 1).unwrap();
    assert_eq!(a.data(), b.data());
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, usize, usize, u64)> {
    (1usize..=2, 1usize..=3, 3usize..=8, 3usize..=8, 1usize..=2, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conv_is_linear((n, c, h, w, stride, seed) in dims(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut g = rng(seed);
        let x = random::<f64>([n, c, h, w], &mut g);
        let y = random::<f64>([n, c, h, w], &mut g);
        let k = random::<f64>([2, c, 3, 3], &mut g);
        let mix = x.zip_map(&y, "mix", |u, v| a * u + b * v).unwrap();
        let lhs = kernels::conv2d(&mix, &k, None, stride, 1).unwrap();
        let cx = kernels::conv2d(&x, &k, None, stride, 1).unwrap();
        let cy = kernels::conv2d(&y, &k, None, stride, 1).unwrap();
        let rhs = cx.zip_map(&cy, "mix", |u, v| a * u + b * v).unwrap();
        prop_assert!(rel_err(&lhs, &rhs) < 1e-6 || rhs.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn conv_transpose_is_adjoint((n, c, h, w, stride, seed) in dims(), k in 1usize..=4, pad in 0usize..=1) {
        let mut g = rng(seed);
        // Input extent chosen so the strided conv reads every row and column.
        let x = random::<f64>([n, c, (h - 1) * stride + k - 2 * pad, (w - 1) * stride + k - 2 * pad], &mut g);
        let wt = random::<f64>([3, c, k, k], &mut g);
        let y = kernels::conv2d(&x, &wt, None, stride, pad).unwrap();
        let r = random::<f64>(y.shape().dims(), &mut g);
        let back = kernels::conv_transpose2d(&r, &wt, None, stride, pad).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        let xs = x;
        let lhs = y.dot(&r).unwrap();
        let rhs = xs.dot(&back).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0));
    }

    #[test]
    fn correlation_is_bilinear((n, c, h, w, _s, seed) in dims(), a in -2.0f64..2.0, k in 0usize..=1) {
        let mut g = rng(seed);
        let f1 = random::<f64>([n, c, h, w], &mut g);
        let f2 = random::<f64>([n, c, h, w], &mut g);
        let f3 = random::<f64>([n, c, h, w], &mut g);
        let cfg = CorrelationConfig { kernel_half_size: k, max_range: 3, shift_mode: ShiftMode::OneSidedStride1, normalize: Normalization::ByChannelCount };
        let mixed = f1.zip_map(&f3, "mix", |u, v| a * u + v).unwrap();
        let lhs = stereo::patch_correlation(&mixed, &f2, &cfg).unwrap().volume;
        let c1 = stereo::patch_correlation(&f1, &f2, &cfg).unwrap().volume;
        let c3 = stereo::patch_correlation(&f3, &f2, &cfg).unwrap().volume;
        let rhs = c1.zip_map(&c3, "mix", |u, v| a * u + v).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        let swapped = stereo::patch_correlation(&f1, &mixed, &cfg).unwrap().volume;
        let c11 = stereo::patch_correlation(&f1, &f1, &cfg).unwrap().volume;
        let c13 = stereo::patch_correlation(&f1, &f3, &cfg).unwrap().volume;
        let rhs = c11.zip_map(&c13, "mix", |u, v| a * u + v).unwrap();
        prop_assert!(swapped.max_abs_diff(&rhs).unwrap() < 1e-10);
    }

    #[test]
    fn warp_by_zero_is_identity((n, c, h, w, _s, seed) in dims()) {
        let mut g = rng(seed);
        let img = random::<f64>([n, c, h, w], &mut g);
        let out = stereo::warp_by_disparity(&img, &Tensor::zeros([n, 1, h, w])).unwrap();
        prop_assert_eq!(out, img);
    }
}
