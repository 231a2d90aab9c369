//! Forward and backward CPU kernels.
//!
//! Convolutions lower to `im2col` plus a dense product. All loops run in a
//! fixed order so results are bitwise reproducible for a given precision.

use super::{Scalar, Shape, Tensor};
use crate::error::{Error, Result};

/// Sliding-window geometry of a 2-D convolution from a `c × h × w` source
/// to an `oh × ow` output.
#[derive(Debug, Clone, Copy)]
struct Window {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output positions along one axis whose source index `o*stride + k - pad`
    /// falls inside `[0, len)`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = k as isize - self.pad as isize;
        // smallest o with o*s + shift >= 0
        let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
        // largest o with o*s + shift <= len-1
        let hi_num = len as isize - 1 - shift;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let lo = lo.max(0) as usize;
        let hi = (hi + 1).clamp(0, out_len as isize) as usize;
        (lo.min(hi), hi)
    }

    fn im2col<T: Scalar>(&self, src: &[T], col: &mut [T]) {
        let cols = self.cols();
        for c in 0..self.c {
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(ki, self.h, self.oh);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid_range(kj, self.w, self.ow);
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    dst.fill(T::zero());
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.pad;
                        let src_row = &src[(c * self.h + iy) * self.w..][..self.w];
                        let out_row = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if self.stride == 1 {
                            let ix0 = xlo + kj - self.pad;
                            out_row[xlo..xhi].copy_from_slice(&src_row[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for ox in xlo..xhi {
                                out_row[ox] = src_row[ox * self.stride + kj - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatter-adds columns back into `dst`.
    fn col2im<T: Scalar>(&self, col: &[T], dst: &mut [T]) {
        let cols = self.cols();
        for c in 0..self.c {
            for ki in 0..self.kh {
                let (ylo, yhi) = self.valid_range(ki, self.h, self.oh);
                for kj in 0..self.kw {
                    let (xlo, xhi) = self.valid_range(kj, self.w, self.ow);
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    for oy in ylo..yhi {
                        let iy = oy * self.stride + ki - self.pad;
                        let dst_row = &mut dst[(c * self.h + iy) * self.w..][..self.w];
                        let in_row = &src[oy * self.ow..(oy + 1) * self.ow];
                        if self.stride == 1 {
                            let ix0 = xlo + kj - self.pad;
                            for (d, &v) in dst_row[ix0..ix0 + (xhi - xlo)].iter_mut().zip(&in_row[xlo..xhi]) {
                                *d += v;
                            }
                        } else {
                            for ox in xlo..xhi {
                                dst_row[ox * self.stride + kj - self.pad] += in_row[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn out_extent(op: &'static str, axis: &'static str, len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if len + 2 * pad < k {
        return Err(Error::shape(
            op,
            format!("{axis} {len} with padding {pad} is smaller than kernel {k}"),
        ));
    }
    Ok((len + 2 * pad - k) / stride + 1)
}

fn check_stride(op: &'static str, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(Error::Contract(format!("{op}: stride must be >= 1")));
    }
    Ok(())
}

fn check_bias<T: Scalar>(op: &'static str, bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(Error::dim(op, "bias", channels, b.len())),
        _ => Ok(()),
    }
}

fn conv_window<T: Scalar>(input: Shape, weight: &Tensor<T>, stride: usize, padding: usize) -> Result<Window> {
    const OP: &str = "conv2d";
    check_stride(OP, stride)?;
    let ws = weight.shape();
    if ws.c != input.c {
        return Err(Error::dim(OP, "channel", ws.c, input.c));
    }
    Ok(Window {
        c: input.c,
        h: input.h,
        w: input.w,
        kh: ws.h,
        kw: ws.w,
        stride,
        pad: padding,
        oh: out_extent(OP, "height", input.h, ws.h, stride, padding)?,
        ow: out_extent(OP, "width", input.w, ws.w, stride, padding)?,
    })
}

/// 2-D cross-correlation, `weight` shaped `[out_c, in_c, kh, kw]`, zero padding.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let s = input.shape();
    let g = conv_window(s, weight, stride, padding)?;
    let oc = weight.shape().n;
    check_bias("conv2d", bias, oc)?;
    let mut out = Tensor::zeros(Shape::new(s.n, oc, g.oh, g.ow));
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); g.rows() * g.cols()] };
    for n in 0..s.n {
        let cols: &[T] = if g.is_pointwise() {
            input.item(n)
        } else {
            g.im2col(input.item(n), &mut col);
            &col
        };
        let dst = out.item_mut(n);
        T::gemm(oc, g.rows(), g.cols(), weight.data(), (g.rows(), 1), cols, (g.cols(), 1), T::zero(), dst, (g.cols(), 1));
        if let Some(b) = bias {
            for (o, plane) in dst.chunks_mut(g.cols()).enumerate() {
                let bo = b.data()[o];
                plane.iter_mut().for_each(|v| *v += bo);
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`]. Each requested output is `Some`.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let s = input.shape();
    let g = conv_window(s, weight, stride, padding)?;
    let oc = weight.shape().n;
    grad_out.expect_shape("conv2d_backward", Shape::new(s.n, oc, g.oh, g.ow))?;
    let [need_in, need_w, need_b] = need;
    let mut gin = need_in.then(|| Tensor::zeros(s));
    let mut gw = need_w.then(|| Tensor::zeros(weight.shape()));
    let mut col = vec![T::zero(); if g.is_pointwise() { 0 } else { g.rows() * g.cols() }];
    for n in 0..s.n {
        let go = grad_out.item(n);
        if let Some(gw) = gw.as_mut() {
            let cols: &[T] = if g.is_pointwise() {
                input.item(n)
            } else {
                g.im2col(input.item(n), &mut col);
                &col
            };
            // gw += go · colsᵀ
            T::gemm(oc, g.cols(), g.rows(), go, (g.cols(), 1), cols, (1, g.cols()), T::one(), gw.data_mut(), (g.rows(), 1));
        }
        if let Some(gin) = gin.as_mut() {
            if g.is_pointwise() {
                T::gemm(g.rows(), oc, g.cols(), weight.data(), (1, g.rows()), go, (g.cols(), 1), T::zero(), gin.item_mut(n), (g.cols(), 1));
            } else {
                T::gemm(g.rows(), oc, g.cols(), weight.data(), (1, g.rows()), go, (g.cols(), 1), T::zero(), &mut col, (g.cols(), 1));
                g.col2im(&col, gin.item_mut(n));
            }
        }
    }
    let gb = need_b.then(|| channel_sums(grad_out));
    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}

/// Per-channel sum over batch and space, as a `[1, c, 1, 1]` tensor.
fn channel_sums<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let s = t.shape();
    let mut out = Tensor::zeros(Shape::new(1, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            out.data_mut()[c] += t.plane(n, c).iter().copied().sum();
        }
    }
    out
}

fn transpose_window<T: Scalar>(input: Shape, weight: &Tensor<T>, stride: usize, padding: usize) -> Result<Window> {
    const OP: &str = "conv_transpose2d";
    check_stride(OP, stride)?;
    let ws = weight.shape();
    if ws.n != input.c {
        return Err(Error::dim(OP, "channel", ws.n, input.c));
    }
    let extent = |len: usize, k: usize, axis: &'static str| -> Result<usize> {
        let full = (len.max(1) - 1) * stride + k;
        if len == 0 || full < 2 * padding + 1 {
            return Err(Error::shape(OP, format!("{axis} {len} yields an empty output")));
        }
        Ok(full - 2 * padding)
    };
    Ok(Window {
        c: ws.c,
        h: extent(input.h, ws.h, "height")?,
        w: extent(input.w, ws.w, "width")?,
        kh: ws.h,
        kw: ws.w,
        stride,
        pad: padding,
        oh: input.h,
        ow: input.w,
    })
}

/// Transposed convolution, `weight` shaped `[in_c, out_c, kh, kw]`.
///
/// Output extent is `(h - 1)·stride - 2·padding + kh`. This is exactly the
/// input-gradient of [`conv2d`] with the same weight.
pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let s = input.shape();
    let g = transpose_window(s, weight, stride, padding)?;
    check_bias("conv_transpose2d", bias, g.c)?;
    let ic = s.c;
    let mut out = Tensor::zeros(Shape::new(s.n, g.c, g.h, g.w));
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..s.n {
        // col = Wᵀ · x
        T::gemm(g.rows(), ic, g.cols(), weight.data(), (1, g.rows()), input.item(n), (g.cols(), 1), T::zero(), &mut col, (g.cols(), 1));
        let dst = out.item_mut(n);
        g.col2im(&col, dst);
        if let Some(b) = bias {
            for (o, plane) in dst.chunks_mut(g.h * g.w).enumerate() {
                let bo = b.data()[o];
                plane.iter_mut().for_each(|v| *v += bo);
            }
        }
    }
    Ok(out)
}

pub fn conv_transpose2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let s = input.shape();
    let g = transpose_window(s, weight, stride, padding)?;
    grad_out.expect_shape("conv_transpose2d_backward", Shape::new(s.n, g.c, g.h, g.w))?;
    let ic = s.c;
    let [need_in, need_w, need_b] = need;
    let mut gin = need_in.then(|| Tensor::zeros(s));
    let mut gw = need_w.then(|| Tensor::zeros(weight.shape()));
    let mut col = vec![T::zero(); g.rows() * g.cols()];
    for n in 0..s.n {
        if !need_in && !need_w {
            break;
        }
        g.im2col(grad_out.item(n), &mut col);
        if let Some(gin) = gin.as_mut() {
            T::gemm(ic, g.rows(), g.cols(), weight.data(), (g.rows(), 1), &col, (g.cols(), 1), T::zero(), gin.item_mut(n), (g.cols(), 1));
        }
        if let Some(gw) = gw.as_mut() {
            T::gemm(ic, g.cols(), g.rows(), input.item(n), (g.cols(), 1), &col, (1, g.cols()), T::one(), gw.data_mut(), (g.rows(), 1));
        }
    }
    let gb = need_b.then(|| channel_sums(grad_out));
    Ok(ConvGrads {
        input: gin,
        weight: gw,
        bias: gb,
    })
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

pub fn leaky_relu_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>, slope: T) -> Tensor<T> {
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > T::zero() { g } else { g * slope })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Channel-wise concatenation preserving part order.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    const OP: &str = "concat_channels";
    let first = parts
        .first()
        .ok_or_else(|| Error::Contract("concat_channels of an empty list".into()))?
        .shape();
    let mut channels = 0;
    for p in parts {
        let s = p.shape();
        if s.n != first.n {
            return Err(Error::dim(OP, "batch", first.n, s.n));
        }
        if s.h != first.h {
            return Err(Error::dim(OP, "height", first.h, s.h));
        }
        if s.w != first.w {
            return Err(Error::dim(OP, "width", first.w, s.w));
        }
        channels += s.c;
    }
    let shape = first.with_c(channels);
    let mut data = Vec::with_capacity(shape.numel());
    for n in 0..first.n {
        for p in parts {
            data.extend_from_slice(p.item(n));
        }
    }
    Tensor::from_vec(shape, data)
}

/// Splits a gradient of a concatenation back into per-part gradients.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let s = grad.shape();
    let plane = s.plane();
    let mut offset = 0;
    channels
        .iter()
        .map(|&c| {
            let mut data = Vec::with_capacity(s.n * c * plane);
            for n in 0..s.n {
                let item = grad.item(n);
                data.extend_from_slice(&item[offset * plane..(offset + c) * plane]);
            }
            offset += c;
            Tensor::from_vec(Shape::new(s.n, c, s.h, s.w), data).expect("split sizes")
        })
        .collect()
}

/// Two-tap bilinear weights for doubling an axis of length `len`
/// (half-pixel centres, edge clamped).
fn upsample_taps<T: Scalar>(len: usize) -> Vec<(usize, usize, T, T)> {
    (0..2 * len)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            let frac = src - i0 as f64;
            (i0, i1, T::lit(1.0 - frac), T::lit(frac))
        })
        .collect()
}

/// Bilinear 2× upsampling.
pub fn bilinear_upsample2x<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.h == 0 || s.w == 0 {
        return Err(Error::shape("bilinear_upsample2x", "empty spatial extent"));
    }
    let ty = upsample_taps::<T>(s.h);
    let tx = upsample_taps::<T>(s.w);
    let out_shape = Shape::new(s.n, s.c, 2 * s.h, 2 * s.w);
    let mut out = Tensor::zeros(out_shape);
    let mut row = vec![T::zero(); 2 * s.w];
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                let r0 = &src[y0 * s.w..(y0 + 1) * s.w];
                let r1 = &src[y1 * s.w..(y1 + 1) * s.w];
                for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                    row[ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                }
                dst[oy * 2 * s.w..(oy + 1) * 2 * s.w].copy_from_slice(&row);
            }
        }
    }
    Ok(out)
}

pub fn bilinear_upsample2x_backward<T: Scalar>(grad_out: &Tensor<T>, in_shape: Shape) -> Tensor<T> {
    let s = in_shape;
    let ty = upsample_taps::<T>(s.h);
    let tx = upsample_taps::<T>(s.w);
    let mut gin = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let go = grad_out.plane(n, c);
            let gi = gin.plane_mut(n, c);
            for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                    let g = go[oy * 2 * s.w + ox];
                    gi[y0 * s.w + x0] += g * wy0 * wx0;
                    gi[y0 * s.w + x1] += g * wy0 * wx1;
                    gi[y1 * s.w + x0] += g * wy1 * wx0;
                    gi[y1 * s.w + x1] += g * wy1 * wx1;
                }
            }
        }
    }
    gin
}

/// Block mean over non-overlapping `factor × factor` windows.
pub fn avgpool_downsample<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    const OP: &str = "avgpool_downsample";
    let s = x.shape();
    if factor == 0 {
        return Err(Error::Contract(format!("{OP}: factor must be >= 1")));
    }
    if !s.h.is_multiple_of(factor) {
        return Err(Error::dim(OP, "height", s.h.next_multiple_of(factor), s.h));
    }
    if !s.w.is_multiple_of(factor) {
        return Err(Error::dim(OP, "width", s.w.next_multiple_of(factor), s.w));
    }
    let inv = T::one() / T::lit((factor * factor) as f64);
    let (oh, ow) = (s.h / factor, s.w / factor);
    Ok(Tensor::from_fn(Shape::new(s.n, s.c, oh, ow), |n, c, y, xo| {
        let mut acc = T::zero();
        for dy in 0..factor {
            for dx in 0..factor {
                acc += x.at(n, c, y * factor + dy, xo * factor + dx);
            }
        }
        acc * inv
    }))
}

pub fn avgpool_downsample_backward<T: Scalar>(grad_out: &Tensor<T>, factor: usize, in_shape: Shape) -> Tensor<T> {
    let inv = T::one() / T::lit((factor * factor) as f64);
    Tensor::from_fn(in_shape, |n, c, y, x| grad_out.at(n, c, y / factor, x / factor) * inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_scalar_kernel_scales() {
        let x = Tensor::<f32>::ones([1, 1, 3, 3]);
        let w = Tensor::<f32>::full([1, 1, 1, 1], 2.0);
        let y = conv2d(&x, &w, None, 1, 0).unwrap();
        assert_eq!(y, Tensor::full([1, 1, 3, 3], 2.0));
    }

    #[test]
    fn zero_weight_gives_zero_output() {
        let x = Tensor::<f32>::from_fn([2, 3, 5, 4], |n, c, y, x| (n + c + y * x) as f32);
        let w = Tensor::<f32>::zeros([4, 3, 3, 3]);
        let y = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 4, 3, 2));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_channel_mismatch_names_axis() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros([1, 3, 3, 3]);
        let err = conv2d(&x, &w, None, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Dimension { axis: "channel", .. }), "{err}");
    }

    #[test]
    fn conv_rejects_zero_stride() {
        let x = Tensor::<f32>::zeros([1, 1, 4, 4]);
        let w = Tensor::<f32>::zeros([1, 1, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 0, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn transposed_corner_kernel_scatters() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut w = Tensor::<f64>::zeros([1, 1, 2, 2]);
        *w.at_mut(0, 0, 0, 0) = 1.0;
        let y = conv_transpose2d(&x, &w, None, 2, 0).unwrap();
        #[rustfmt::skip]
        let expected = vec![
            1.0, 0.0, 2.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            3.0, 0.0, 4.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
        ];
        assert_eq!(y.data(), &expected[..]);
    }

    #[test]
    fn transposed_output_extent() {
        let x = Tensor::<f32>::zeros([1, 4, 3, 5]);
        let w = Tensor::<f32>::zeros([4, 2, 4, 4]);
        let y = conv_transpose2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 6, 10));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leaky_relu_values() {
        let x = Tensor::<f32>::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = leaky_relu(&x, 0.1);
        assert_eq!(y.data(), &[-0.1, 0.0, 2.0]);
        assert_eq!(leaky_relu(&x, 1.0), x);
    }

    #[test]
    fn concat_shapes_and_split() {
        let a = Tensor::<f32>::full([1, 2, 4, 4], 1.0);
        let b = Tensor::<f32>::full([1, 3, 4, 4], 2.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), Shape::new(1, 5, 4, 4));
        let parts = split_channels(&c, &[2, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn concat_spatial_mismatch() {
        let a = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let b = Tensor::<f32>::zeros([1, 2, 4, 5]);
        let err = concat_channels(&[&a, &b]).unwrap_err();
        assert!(matches!(err, Error::Dimension { axis: "width", .. }));
    }

    #[test]
    fn upsample_preserves_constants_and_monotone_rows() {
        let x = Tensor::<f32>::full([1, 2, 3, 2], 5.0);
        let y = bilinear_upsample2x(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 6, 4));
        assert!(y.data().iter().all(|&v| v == 5.0));

        let r = Tensor::<f32>::from_vec([1, 1, 1, 2], vec![0.0, 1.0]).unwrap();
        let u = bilinear_upsample2x(&r).unwrap();
        assert_eq!(u.shape(), Shape::new(1, 1, 2, 4));
        for row in u.data().chunks(4) {
            assert!(row.windows(2).all(|p| p[0] <= p[1]), "{u:?}");
        }
    }

    #[test]
    fn avgpool_block_mean() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool_downsample(&x, 2).unwrap().data(), &[2.5]);
        assert_eq!(avgpool_downsample(&x, 1).unwrap(), x);
        assert!(matches!(
            avgpool_downsample(&Tensor::<f64>::zeros([1, 1, 3, 4]), 2),
            Err(Error::Dimension { axis: "height", .. })
        ));
    }
}
