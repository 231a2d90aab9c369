use super::{CorrelationConfig, CostVolume, Normalization};
use crate::error::{Error, Result};
use crate::tensor::{kernels, Scalar, Shape, Tensor, Tape, Var};

fn check_pair<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>) -> Result<()> {
    f1.expect_shape("correlation", f2.shape())
}

fn scale_of<T: Scalar>(cfg: &CorrelationConfig, channels: usize) -> T {
    match cfg.normalize {
        Normalization::None => T::one(),
        Normalization::ByChannelCount => T::one() / T::lit(channels.max(1) as f64),
    }
}

/// Columns `x` with `x - shift` inside `[0, w)`.
fn overlap(shift: i32, w: usize) -> (usize, usize) {
    let lo = shift.max(0) as usize;
    let hi = (w as i64 + (shift.min(0) as i64)).max(0) as usize;
    (lo.min(hi), hi)
}

/// `p[y][x] = Σ_c a[c,y,x] · b[c,y,x-shift]` for one batch item.
fn shifted_products<T: Scalar>(a: &[T], b: &[T], s: Shape, shift: i32, p: &mut [T]) {
    p.fill(T::zero());
    let (lo, hi) = overlap(shift, s.w);
    if lo >= hi {
        return;
    }
    let plane = s.plane();
    for c in 0..s.c {
        let (pa, pb) = (&a[c * plane..(c + 1) * plane], &b[c * plane..(c + 1) * plane]);
        for y in 0..s.h {
            let row = y * s.w;
            let blo = (lo as i64 - shift as i64) as usize;
            let ra = &pa[row + lo..row + hi];
            let rb = &pb[row + blo..row + blo + (hi - lo)];
            for ((d, &u), &v) in p[row + lo..row + hi].iter_mut().zip(ra).zip(rb) {
                *d += u * v;
            }
        }
    }
}

/// Zero-padded `(2k+1)²` box sum, computed separably. Self-adjoint.
fn box_sum<T: Scalar>(src: &[T], h: usize, w: usize, k: usize, tmp: &mut [T], dst: &mut [T]) {
    if k == 0 {
        dst.copy_from_slice(src);
        return;
    }
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut tmp[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(k);
            let hi = (x + k + 1).min(w);
            out[x] = row[lo..hi].iter().copied().sum();
        }
    }
    for y in 0..h {
        let lo = y.saturating_sub(k);
        let hi = (y + k + 1).min(h);
        let out = &mut dst[y * w..(y + 1) * w];
        out.fill(T::zero());
        for yy in lo..hi {
            for (d, &v) in out.iter_mut().zip(&tmp[yy * w..(yy + 1) * w]) {
                *d += v;
            }
        }
    }
}

/// Patch correlation of `f1` against horizontally shifted `f2`.
///
/// `out[n,i,y,x] = Σ_{o ∈ [-k,k]²} ⟨f1(y+oy, x+ox), f2(y+oy, x+ox-shift_i)⟩`
/// with zero reads outside the map, optionally divided by the channel count.
pub fn correlation<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>, cfg: &CorrelationConfig) -> Result<CostVolume<T>> {
    check_pair(f1, f2)?;
    cfg.validate()?;
    let s = f1.shape();
    let shifts = cfg.shifts();
    let scale = scale_of::<T>(cfg, s.c);
    let plane = s.plane();
    let mut volume = Tensor::zeros(Shape::new(s.n, shifts.len(), s.h, s.w));
    let mut p = vec![T::zero(); plane];
    let mut tmp = vec![T::zero(); plane];
    for n in 0..s.n {
        for (i, &shift) in shifts.iter().enumerate() {
            let dst = volume.plane_mut(n, i);
            if cfg.kernel_half_size == 0 {
                shifted_products(f1.item(n), f2.item(n), s, shift, dst);
            } else {
                shifted_products(f1.item(n), f2.item(n), s, shift, &mut p);
                box_sum(&p, s.h, s.w, cfg.kernel_half_size, &mut tmp, dst);
            }
            if scale != T::one() {
                dst.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    Ok(CostVolume { volume, shifts })
}

/// Alias of [`correlation`] under the name of the patch-based operator.
pub fn patch_correlation<T: Scalar>(f1: &Tensor<T>, f2: &Tensor<T>, cfg: &CorrelationConfig) -> Result<CostVolume<T>> {
    correlation(f1, f2, cfg)
}

/// Gradients of [`correlation`] with respect to `f1` and `f2`.
pub fn correlation_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    f1: &Tensor<T>,
    f2: &Tensor<T>,
    cfg: &CorrelationConfig,
    need: [bool; 2],
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    check_pair(f1, f2)?;
    let s = f1.shape();
    let shifts = cfg.shifts();
    grad_out.expect_shape("correlation_backward", Shape::new(s.n, shifts.len(), s.h, s.w))?;
    let scale = scale_of::<T>(cfg, s.c);
    let plane = s.plane();
    let mut g1 = need[0].then(|| Tensor::zeros(s));
    let mut g2 = need[1].then(|| Tensor::zeros(s));
    let mut gp = vec![T::zero(); plane];
    let mut tmp = vec![T::zero(); plane];
    for n in 0..s.n {
        for (i, &shift) in shifts.iter().enumerate() {
            box_sum(grad_out.plane(n, i), s.h, s.w, cfg.kernel_half_size, &mut tmp, &mut gp);
            if gp.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let (lo, hi) = overlap(shift, s.w);
            if lo >= hi {
                continue;
            }
            let blo = (lo as i64 - shift as i64) as usize;
            let len = hi - lo;
            for c in 0..s.c {
                for y in 0..s.h {
                    let row = y * s.w;
                    let gpr = &gp[row + lo..row + hi];
                    if let Some(g1) = g1.as_mut() {
                        let b = &f2.plane(n, c)[row + blo..row + blo + len];
                        let d = &mut g1.plane_mut(n, c)[row + lo..row + hi];
                        for ((d, &g), &v) in d.iter_mut().zip(gpr).zip(b) {
                            *d += scale * g * v;
                        }
                    }
                    if let Some(g2) = g2.as_mut() {
                        let a = &f1.plane(n, c)[row + lo..row + hi];
                        let d = &mut g2.plane_mut(n, c)[row + blo..row + blo + len];
                        for ((d, &g), &u) in d.iter_mut().zip(gpr).zip(a) {
                            *d += scale * g * u;
                        }
                    }
                }
            }
        }
    }
    Ok((g1, g2))
}

/// Learned 3×3 stride-1 pre-convolution applied to one feature stream.
#[derive(Debug, Clone, Copy)]
pub struct PreConv<'a, T: Scalar> {
    pub weight: &'a Tensor<T>,
    pub bias: Option<&'a Tensor<T>>,
}

impl<T: Scalar> PreConv<'_, T> {
    fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let ws = self.weight.shape();
        if ws.h != 3 || ws.w != 3 {
            return Err(Error::shape("pointwise_correlation", format!("pre-convolution must be 3x3, got {}x{}", ws.h, ws.w)));
        }
        kernels::conv2d(x, self.weight, self.bias, 1, 1)
    }
}

/// Point-wise correlation: a 3×3 convolution on each stream followed by
/// the patch-free (`k = 0`) correlation of the convolved features. The
/// configured `kernel_half_size` is ignored.
pub fn pointwise_correlation<T: Scalar>(
    f1: &Tensor<T>,
    f2: &Tensor<T>,
    pre1: PreConv<'_, T>,
    pre2: PreConv<'_, T>,
    cfg: &CorrelationConfig,
) -> Result<CostVolume<T>> {
    check_pair(f1, f2)?;
    let a = pre1.apply(f1)?;
    let b = pre2.apply(f2)?;
    let cfg = CorrelationConfig {
        kernel_half_size: 0,
        ..cfg.clone()
    };
    correlation(&a, &b, &cfg)
}

impl<T: Scalar> Tape<T> {
    /// Recorded [`pointwise_correlation`]; `pre` holds `(weight, bias)` per stream.
    pub fn pointwise_correlation(
        &mut self,
        f1: Var,
        f2: Var,
        pre1: (Var, Option<Var>),
        pre2: (Var, Option<Var>),
        cfg: &CorrelationConfig,
    ) -> Result<Var> {
        let a = self.conv2d(f1, pre1.0, pre1.1, 1, 1)?;
        let b = self.conv2d(f2, pre2.0, pre2.1, 1, 1)?;
        let cfg = CorrelationConfig {
            kernel_half_size: 0,
            ..cfg.clone()
        };
        self.correlation(a, b, &cfg)
    }
}
