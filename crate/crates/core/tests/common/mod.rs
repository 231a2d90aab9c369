//! Independent nested-loop oracles and a finite-difference checker shared by
//! the integration tests.
#![allow(dead_code)]

use disparity_core::stereo::{CorrelationConfig, Normalization};
use disparity_core::{Scalar, Shape, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random<T: Scalar>(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::rand_uniform(shape, -1.0, 1.0, rng)
}

/// `max |a - b| / max |b|`, computed in f64.
pub fn rel_err<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    let diff = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.to_f64().unwrap() - y.to_f64().unwrap()).abs())
        .fold(0.0, f64::max);
    let scale = b.data().iter().map(|y| y.to_f64().unwrap().abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

fn get<T: Scalar>(t: &Tensor<T>, n: usize, c: usize, y: i64, x: i64) -> T {
    let s = t.shape();
    if y < 0 || x < 0 || y >= s.h as i64 || x >= s.w as i64 {
        T::zero()
    } else {
        t.at(n, c, y as usize, x as usize)
    }
}

pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Tensor<T> {
    let s = x.shape();
    let ws = w.shape();
    let oh = (s.h + 2 * pad - ws.h) / stride + 1;
    let ow = (s.w + 2 * pad - ws.w) / stride + 1;
    Tensor::from_fn([s.n, ws.n, oh, ow], |n, o, y, xx| {
        let mut acc = b.map_or(T::zero(), |b| b.data()[o]);
        for i in 0..s.c {
            for ky in 0..ws.h {
                for kx in 0..ws.w {
                    let iy = (y * stride + ky) as i64 - pad as i64;
                    let ix = (xx * stride + kx) as i64 - pad as i64;
                    acc += w.at(o, i, ky, kx) * get(x, n, i, iy, ix);
                }
            }
        }
        acc
    })
}

/// Scatter form: every input pixel stamps its weighted kernel onto the output.
pub fn conv_transpose2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: Option<&Tensor<T>>, stride: usize, pad: usize) -> Tensor<T> {
    let s = x.shape();
    let ws = w.shape();
    let oh = (s.h - 1) * stride + ws.h - 2 * pad;
    let ow = (s.w - 1) * stride + ws.w - 2 * pad;
    let mut out = Tensor::from_fn([s.n, ws.c, oh, ow], |_, o, _, _| b.map_or(T::zero(), |b| b.data()[o]));
    for n in 0..s.n {
        for i in 0..s.c {
            for y in 0..s.h {
                for xx in 0..s.w {
                    for o in 0..ws.c {
                        for ky in 0..ws.h {
                            for kx in 0..ws.w {
                                let oy = (y * stride + ky) as i64 - pad as i64;
                                let ox = (xx * stride + kx) as i64 - pad as i64;
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    *out.at_mut(n, o, oy as usize, ox as usize) += x.at(n, i, y, xx) * w.at(i, o, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Patch correlation straight from its definition.
pub fn correlation<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>, cfg: &CorrelationConfig) -> Tensor<T> {
    let s = f1.shape();
    let shifts = cfg.shifts();
    let k = cfg.kernel_half_size as i64;
    let norm = match cfg.normalize {
        Normalization::None => T::one(),
        Normalization::ByChannelCount => T::one() / T::lit(s.c as f64),
    };
    Tensor::from_fn([s.n, shifts.len(), s.h, s.w], |n, i, y, x| {
        let mut acc = T::zero();
        for oy in -k..=k {
            for ox in -k..=k {
                let (yy, xx) = (y as i64 + oy, x as i64 + ox);
                for c in 0..s.c {
                    acc += get(f1, n, c, yy, xx) * get(f2, n, c, yy, xx - shifts[i] as i64);
                }
            }
        }
        acc * norm
    })
}

/// Element-wise multiply then channel sum, one shift at a time.
pub fn pointwise_products<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>, shifts: &[i32], norm: T) -> Tensor<T> {
    let s = f1.shape();
    let mut out = Tensor::zeros([s.n, shifts.len(), s.h, s.w]);
    for (i, &d) in shifts.iter().enumerate() {
        for n in 0..s.n {
            for c in 0..s.c {
                for y in 0..s.h {
                    for x in 0..s.w {
                        let prod = f1.at(n, c, y, x) * get(f2, n, c, y as i64, x as i64 - d as i64);
                        *out.at_mut(n, i, y, x) += prod * norm;
                    }
                }
            }
        }
    }
    out
}

/// Linear interpolation weights computed from `floor` directly.
pub fn warp<T: Scalar>(image: &Tensor<T>, disp: &Tensor<T>) -> Tensor<T> {
    let s = image.shape();
    Tensor::from_fn(s, |n, c, y, x| {
        let src = x as f64 - disp.at(n, 0, y, x).to_f64().unwrap();
        let x0 = src.floor();
        let frac = src - x0;
        let left = get(image, n, c, y as i64, x0 as i64).to_f64().unwrap();
        let right = get(image, n, c, y as i64, x0 as i64 + 1).to_f64().unwrap();
        T::lit((1.0 - frac) * left + frac * right)
    })
}

/// Maximum norm-wise relative error between the analytic gradient of `f`
/// and central finite differences, over every input.
///
/// The scalar objective is `Σ f(inputs) ⊙ r` for a fixed random `r`, so
/// every output element contributes with a distinct weight.
pub fn grad_check(inputs: &[Tensor<f64>], seed: u64, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    const H: f64 = 1e-3;
    let mut proj: Option<Tensor<f64>> = None;
    let mut objective = |values: &[Tensor<f64>], want_grad: bool| -> (f64, Vec<Tensor<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone(), want_grad)).collect();
        let out = f(&mut tape, &vars);
        let r = proj
            .get_or_insert_with(|| {
                let mut g = rng(seed);
                Tensor::from_fn(tape.shape(out), |_, _, _, _| g.gen_range(0.5..1.5))
            })
            .clone();
        let r = tape.constant(r);
        let prod = tape.mul(out, r).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss).data()[0];
        let mut grads = Vec::new();
        if want_grad {
            tape.backward(loss).unwrap();
            grads = vars.iter().map(|&v| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v)))).collect();
        }
        (value, grads)
    };
    let (_, analytic) = objective(inputs, true);
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = Tensor::zeros(input.shape());
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            numeric.data_mut()[i] = (objective(&plus, false).0 - objective(&minus, false).0) / (2.0 * H);
        }
        let a = &analytic[k];
        let diff: f64 = a.data().iter().zip(numeric.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = numeric.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = na.max(nn);
        if denom > 0.0 {
            worst = worst.max(diff / denom);
        }
    }
    worst
}

pub fn shape(t: [usize; 4]) -> Shape {
    Shape::new(t[0], t[1], t[2], t[3])
}

/// Worst relative error of each library kernel against its oracle over
/// `cases` random small shapes, in precision `T`.
pub fn kernel_suite<T: Scalar>(cases: usize, seed: u64) -> Vec<(&'static str, f64)> {
    use disparity_core::stereo::{self, PreConv, ShiftMode};
    use disparity_core::tensor::kernels;

    let mut g = rng(seed);
    let mut worst = [0.0f64; 5];
    for _ in 0..cases {
        let n = g.gen_range(1..=2);
        let c = g.gen_range(1..=4);
        let h = g.gen_range(3..=9);
        let w = g.gen_range(3..=12);
        let oc = g.gen_range(1..=4);
        let k = [1, 3, 4][g.gen_range(0..3)];
        let stride = g.gen_range(1..=2);
        let pad = g.gen_range(0..k.min(3));

        let x = random::<T>([n, c, h, w], &mut g);
        let wt = random::<T>([oc, c, k, k], &mut g);
        let b = random::<T>([1, 1, 1, oc], &mut g);
        if h + 2 * pad >= k && w + 2 * pad >= k {
            let got = kernels::conv2d(&x, &wt, Some(&b), stride, pad).unwrap();
            worst[0] = worst[0].max(rel_err(&got, &conv2d(&x, &wt, Some(&b), stride, pad)));
        }

        let wt_t = random::<T>([c, oc, k, k], &mut g);
        if (h - 1) * stride + k > 2 * pad && (w - 1) * stride + k > 2 * pad {
            let got = kernels::conv_transpose2d(&x, &wt_t, Some(&b), stride, pad).unwrap();
            worst[1] = worst[1].max(rel_err(&got, &conv_transpose2d(&x, &wt_t, Some(&b), stride, pad)));
        }

        let f2 = random::<T>([n, c, h, w], &mut g);
        let cfg = CorrelationConfig {
            kernel_half_size: g.gen_range(0..=2),
            max_range: g.gen_range(1..=5),
            shift_mode: if g.gen_bool(0.5) { ShiftMode::TwoSidedStride2 } else { ShiftMode::OneSidedStride1 },
            normalize: if g.gen_bool(0.5) { Normalization::ByChannelCount } else { Normalization::None },
        };
        let got = stereo::patch_correlation(&x, &f2, &cfg).unwrap();
        worst[2] = worst[2].max(rel_err(&got.volume, &correlation(&x, &f2, &cfg)));

        let p1 = random::<T>([oc, c, 3, 3], &mut g);
        let p2 = random::<T>([oc, c, 3, 3], &mut g);
        let pre1 = PreConv { weight: &p1, bias: Some(&b) };
        let pre2 = PreConv { weight: &p2, bias: None };
        let got = stereo::pointwise_correlation(&x, &f2, pre1, pre2, &cfg).unwrap();
        let norm = match cfg.normalize {
            Normalization::None => T::one(),
            Normalization::ByChannelCount => T::one() / T::lit(oc as f64),
        };
        let a = conv2d(&x, &p1, Some(&b), 1, 1);
        let bb = conv2d(&f2, &p2, None, 1, 1);
        worst[3] = worst[3].max(rel_err(&got.volume, &pointwise_products(&a, &bb, &cfg.shifts(), norm)));

        let disp = Tensor::<T>::rand_uniform([n, 1, h, w], -1.0, w as f64 * 0.6, &mut g);
        let got = stereo::warp_by_disparity(&x, &disp).unwrap();
        worst[4] = worst[4].max(rel_err(&got, &warp(&x, &disp)));
    }
    ["conv2d", "conv_transpose2d", "patch_correlation", "pointwise_correlation", "warp_by_disparity"]
        .into_iter()
        .zip(worst)
        .collect()
}

/// Tolerance of [`kernel_suite`] for precision `T`.
pub fn kernel_tolerance<T: Scalar>() -> f64 {
    match T::PRECISION {
        disparity_core::Precision::F32 => 1e-5,
        disparity_core::Precision::F64 => 1e-10,
    }
}

/// Finite-difference check of every recorded op in f64. Returns the worst
/// norm-wise relative error per op.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    use disparity_core::loss::{multiscale_loss, GtPyramid, ValidityMask};
    use disparity_core::stereo::ShiftMode;

    let mut g = rng(seed);
    let mut out = Vec::new();
    let mut check = |name: &'static str, inputs: Vec<Tensor<f64>>, f: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var| {
        out.push((name, grad_check(&inputs, seed ^ name.len() as u64, f)));
    };

    // Values kept away from the kinks of piecewise-linear ops.
    let away = |g: &mut ChaCha8Rng, shape: [usize; 4]| {
        Tensor::from_fn(shape, |_, _, _, _| {
            let v: f64 = g.gen_range(0.05..1.0);
            if g.gen_bool(0.5) { v } else { -v }
        })
    };

    let x = random::<f64>([2, 2, 5, 6], &mut g);
    let w = random::<f64>([3, 2, 3, 3], &mut g);
    let b = random::<f64>([1, 3, 1, 1], &mut g);
    check("conv2d", vec![x.clone(), w.clone(), b.clone()], &|t, v| t.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap());
    check("conv2d stride 2", vec![x.clone(), w.clone()], &|t, v| t.conv2d(v[0], v[1], None, 2, 1).unwrap());
    let wt = random::<f64>([2, 3, 4, 4], &mut g);
    check("conv_transpose2d", vec![x.clone(), wt, b.clone()], &|t, v| t.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1).unwrap());

    // conv2d -> leaky_relu -> sum composite, every parameter checked.
    // Resampled until no pre-activation sits within reach of the kink.
    let small = loop {
        let x = random::<f64>([1, 2, 6, 6], &mut g);
        if conv2d(&x, &w, Some(&b), 1, 1).data().iter().all(|v| v.abs() > 0.02) {
            break x;
        }
    };
    check("conv2d+leaky_relu", vec![small, w.clone(), b.clone()], &|t, v| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), 1, 1).unwrap();
        let a = t.leaky_relu(y, 0.1);
        t.sum(a)
    });
    check("leaky_relu", vec![away(&mut g, [1, 2, 4, 4])], &|t, v| t.leaky_relu(v[0], 0.1));
    check("relu", vec![away(&mut g, [1, 2, 4, 4])], &|t, v| t.relu(v[0]));
    check("abs", vec![away(&mut g, [1, 2, 4, 4])], &|t, v| t.abs(v[0]));
    let p = random::<f64>([1, 2, 4, 4], &mut g);
    let q = random::<f64>([1, 2, 4, 4], &mut g);
    let r = random::<f64>([1, 1, 4, 4], &mut g);
    check("add", vec![p.clone(), q.clone()], &|t, v| t.add(v[0], v[1]).unwrap());
    check("sub", vec![p.clone(), q.clone()], &|t, v| t.sub(v[0], v[1]).unwrap());
    check("mul", vec![p.clone(), q.clone()], &|t, v| t.mul(v[0], v[1]).unwrap());
    check("scale", vec![p.clone()], &|t, v| t.scale(v[0], -1.7));
    check("concat_channels", vec![p.clone(), r.clone(), q.clone()], &|t, v| t.concat_channels(v).unwrap());
    check("mean_channels", vec![p.clone()], &|t, v| t.mean_channels(v[0]));
    check("bilinear_upsample2x", vec![random::<f64>([1, 2, 3, 5], &mut g)], &|t, v| t.bilinear_upsample2x(v[0]).unwrap());
    check("avgpool_downsample", vec![random::<f64>([1, 2, 8, 4], &mut g)], &|t, v| t.avgpool_downsample(v[0], 2).unwrap());
    check("sum+weighted_sum", vec![p.clone(), q.clone()], &|t, v| {
        let a = t.sum(v[0]);
        let b = t.sum(v[1]);
        t.weighted_sum(&[(a, 0.3), (b, -1.2)]).unwrap()
    });

    let f1 = random::<f64>([1, 3, 5, 9], &mut g);
    let f2 = random::<f64>([1, 3, 5, 9], &mut g);
    let patch = CorrelationConfig {
        kernel_half_size: 1,
        max_range: 4,
        shift_mode: ShiftMode::TwoSidedStride2,
        normalize: Normalization::ByChannelCount,
    };
    check("patch_correlation", vec![f1.clone(), f2.clone()], &|t, v| t.correlation(v[0], v[1], &patch).unwrap());
    let pw = CorrelationConfig {
        kernel_half_size: 0,
        max_range: 5,
        shift_mode: ShiftMode::OneSidedStride1,
        normalize: Normalization::None,
    };
    let pre1 = random::<f64>([2, 3, 3, 3], &mut g);
    let pre2 = random::<f64>([2, 3, 3, 3], &mut g);
    let pb = random::<f64>([1, 2, 1, 1], &mut g);
    check("pointwise_correlation", vec![f1.clone(), f2.clone(), pre1, pre2, pb], &|t, v| {
        t.pointwise_correlation(v[0], v[1], (v[2], Some(v[4])), (v[3], None), &pw).unwrap()
    });

    // Non-integer sample positions: fractional part of d kept in [0.2, 0.8].
    let disp = Tensor::from_fn([1, 1, 5, 9], |_, _, _, _| g.gen_range(0..4) as f64 + g.gen_range(0.2..0.8));
    check("warp_by_disparity", vec![f1.clone(), disp], &|t, v| t.warp_by_disparity(v[0], v[1]).unwrap());

    // Smooth-L1: residuals kept off |x| = 1 and x = 0.
    let target = random::<f64>([1, 1, 8, 8], &mut g);
    let offsets = Tensor::from_fn([1, 1, 8, 8], |_, _, _, _| {
        let m: f64 = if g.gen_bool(0.5) { g.gen_range(0.1..0.9) } else { g.gen_range(1.1..3.0) };
        if g.gen_bool(0.5) { m } else { -m }
    });
    let pred = target.zip_map(&offsets, "offset", |a, b| a + b).unwrap();
    let mask: Vec<bool> = (0..64).map(|_| g.gen_bool(0.7)).collect();
    check("smooth_l1_loss", vec![pred.clone()], &|t, v| t.smooth_l1_loss(v[0], &target, &mask).unwrap());

    let gt = Tensor::from_fn([1, 1, 8, 8], |_, _, _, _| g.gen_range(1.0..6.0));
    let pyramid = GtPyramid::with_scales(&gt, &ValidityMask::from_disparity(&gt), 3).unwrap();
    let preds: Vec<Tensor<f64>> = pyramid
        .levels
        .iter()
        .map(|(l, _)| {
            Tensor::from_fn(l.shape(), |n, c, y, x| {
                let m: f64 = if g.gen_bool(0.5) { g.gen_range(0.1..0.9) } else { g.gen_range(1.1..2.0) };
                l.at(n, c, y, x) + if g.gen_bool(0.5) { m } else { -m }
            })
        })
        .collect();
    check("multiscale_loss", preds, &|t, v| multiscale_loss(t, v, &pyramid, &[0.5, 0.3, 0.2]).unwrap());
    out
}

/// Tolerance of [`gradient_suite`].
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// A narrow network that still has every stage of the desk model.
pub fn tiny_network() -> disparity_core::network::NetworkConfig {
    disparity_core::network::NetworkConfig {
        base_channels: 4,
        max_channels: 16,
        ..disparity_core::network::NetworkConfig::desk()
    }
}

/// Prepared 64×64 stereograms with disparities up to 8 px.
pub fn stereo_samples(n: usize, seed: u64) -> Vec<disparity_core::train::PreparedSample> {
    use disparity_core::data::{gen_random_dot_stereogram, DisparityField, PreprocessConfig};
    let field = DisparityField::Layered { min: 1.0, max: 8.0, objects: 1 };
    let raw: Vec<_> = (0..n).map(|i| gen_random_dot_stereogram(64, 64, &field, seed + i as u64).unwrap()).collect();
    disparity_core::train::PreparedSample::prepare_all(&raw, &PreprocessConfig::desk()).unwrap()
}
