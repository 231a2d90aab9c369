use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn check<T: Scalar>(image: &Tensor<T>, disparity: &Tensor<T>) -> Result<()> {
    const OP: &str = "warp_by_disparity";
    let (a, d) = (image.shape(), disparity.shape());
    if d.c != 1 {
        return Err(Error::dim(OP, "channel", 1, d.c));
    }
    if a.n != d.n {
        return Err(Error::dim(OP, "batch", a.n, d.n));
    }
    if a.h != d.h {
        return Err(Error::dim(OP, "height", a.h, d.h));
    }
    if a.w != d.w {
        return Err(Error::dim(OP, "width", a.w, d.w));
    }
    Ok(())
}

/// Left tap index and weight of the linear interpolant at `p`.
#[inline]
fn taps<T: Scalar>(p: T) -> (i64, T) {
    let f = p.floor();
    (f.to_i64().unwrap_or(i64::MIN / 2), p - f)
}

#[inline]
fn read<T: Scalar>(row: &[T], i: i64) -> T {
    if i >= 0 && (i as usize) < row.len() {
        row[i as usize]
    } else {
        T::zero()
    }
}

/// Synthesises the left view: `out(y, x) = image(y, x - d(y, x))`, linear
/// along the row, zero outside the image.
pub fn warp_by_disparity<T: Scalar>(image: &Tensor<T>, disparity: &Tensor<T>) -> Result<Tensor<T>> {
    check(image, disparity)?;
    let s = image.shape();
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let disp = disparity.plane(n, 0);
        for c in 0..s.c {
            let src = image.plane(n, c);
            let dst = out.plane_mut(n, c);
            for y in 0..s.h {
                let row = &src[y * s.w..(y + 1) * s.w];
                for x in 0..s.w {
                    let i = y * s.w + x;
                    let (x0, a) = taps(T::lit(x as f64) - disp[i]);
                    dst[i] = (T::one() - a) * read(row, x0) + a * read(row, x0 + 1);
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`warp_by_disparity`] with respect to the image and the
/// disparity. At integer disparities the right-sided derivative is used.
pub fn warp_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    image: &Tensor<T>,
    disparity: &Tensor<T>,
    need: [bool; 2],
) -> Result<(Option<Tensor<T>>, Option<Tensor<T>>)> {
    check(image, disparity)?;
    let s = image.shape();
    grad_out.expect_shape("warp_backward", s)?;
    let mut gi = need[0].then(|| Tensor::zeros(s));
    let mut gd = need[1].then(|| Tensor::zeros(disparity.shape()));
    for n in 0..s.n {
        let disp = disparity.plane(n, 0);
        for c in 0..s.c {
            let src = image.plane(n, c);
            let go = grad_out.plane(n, c);
            for y in 0..s.h {
                let row = &src[y * s.w..(y + 1) * s.w];
                for x in 0..s.w {
                    let i = y * s.w + x;
                    let g = go[i];
                    let (x0, a) = taps(T::lit(x as f64) - disp[i]);
                    if let Some(gi) = gi.as_mut() {
                        let plane = gi.plane_mut(n, c);
                        let w = s.w as i64;
                        if (0..w).contains(&x0) {
                            plane[y * s.w + x0 as usize] += g * (T::one() - a);
                        }
                        if (0..w).contains(&(x0 + 1)) {
                            plane[y * s.w + (x0 + 1) as usize] += g * a;
                        }
                    }
                    if let Some(gd) = gd.as_mut() {
                        // d out / d p = I(x0+1) - I(x0), and p = x - d.
                        let slope = read(row, x0 + 1) - read(row, x0);
                        gd.plane_mut(n, 0)[i] -= g * slope;
                    }
                }
            }
        }
    }
    Ok((gi, gd))
}
