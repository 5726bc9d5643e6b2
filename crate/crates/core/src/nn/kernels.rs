//! Slice-level convolution kernels on `[C, H, W]` maps with zero padding.
//!
//! Accumulation order is fixed: output channel, input channel, kernel
//! element, then pixels in row-major order. The learnable-spacing kernel
//! follows the same order so that integer positions reproduce the dilated
//! convolution bit for bit.

use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;

/// Range of output coordinates `o` for which `o + off` stays inside `0..n`.
#[inline]
fn valid(n: usize, off: isize) -> (usize, usize) {
    let lo = (-off).max(0) as usize;
    let hi = (n as isize - off).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// `out[y][x] += s * inp[y + dy][x + dx]` where the source is in bounds.
#[inline]
pub(crate) fn shift_axpy<T: Scalar>(out: &mut [T], inp: &[T], h: usize, w: usize, dy: isize, dx: isize, s: T) {
    let (y0, y1) = valid(h, dy);
    let (x0, x1) = valid(w, dx);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let src = ((y as isize + dy) as usize) * w;
        let o = &mut out[y * w + x0..y * w + x1];
        let i = &inp[(src as isize + x0 as isize + dx) as usize..(src as isize + x1 as isize + dx) as usize];
        for (a, &b) in o.iter_mut().zip(i) {
            *a = *a + s * b;
        }
    }
}

/// `sum_y,x a[y][x] * b[y + dy][x + dx]` over in-bounds sources.
#[inline]
pub(crate) fn shift_dot<T: Scalar>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize) -> T {
    let (y0, y1) = valid(h, dy);
    let (x0, x1) = valid(w, dx);
    // eight interleaved partial sums let the compiler vectorize the reduction
    let mut lanes = [T::zero(); 8];
    if x0 >= x1 {
        return T::zero();
    }
    for y in y0..y1 {
        let src = ((y as isize + dy) as usize) * w;
        let ar = &a[y * w + x0..y * w + x1];
        let br = &b[(src as isize + x0 as isize + dx) as usize..(src as isize + x1 as isize + dx) as usize];
        let mut ca = ar.chunks_exact(8);
        let mut cb = br.chunks_exact(8);
        for (p, q) in (&mut ca).zip(&mut cb) {
            for l in 0..8 {
                lanes[l] = lanes[l] + p[l] * q[l];
            }
        }
        for (l, (&p, &q)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
            lanes[l] = lanes[l] + p * q;
        }
    }
    lanes.iter().fold(T::zero(), |s, &v| s + v)
}

/// Geometry shared by both convolution flavours.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

/// Integer offsets `(dy, dx)` of a `k x k` kernel with dilation `d`, row-major.
pub(crate) fn grid_offsets(k: usize, d: usize) -> Vec<(isize, isize)> {
    let r = (k / 2) as isize;
    let mut v = Vec::with_capacity(k * k);
    for ky in 0..k as isize {
        for kx in 0..k as isize {
            v.push(((ky - r) * d as isize, (kx - r) * d as isize));
        }
    }
    v
}

/// Dilated "same" convolution. `weights` is `[cout, cin, k*k]`.
pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    weights: &[T],
    bias: Option<&[T]>,
    dims: ConvDims,
    offsets: &[(isize, isize)],
) -> Vec<T> {
    let hw = dims.h * dims.w;
    let e = offsets.len();
    let mut out = vec![T::zero(); dims.cout * hw];
    for o in 0..dims.cout {
        let out_c = &mut out[o * hw..(o + 1) * hw];
        if let Some(b) = bias {
            out_c.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..dims.cin {
            let in_c = &x[i * hw..(i + 1) * hw];
            for (k, &(dy, dx)) in offsets.iter().enumerate() {
                let wv = weights[(o * dims.cin + i) * e + k];
                shift_axpy(out_c, in_c, dims.h, dims.w, dy, dx, wv);
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`]: `(dx, dweights, dbias)`.
pub(crate) fn conv_backward<T: Scalar>(
    x: &[T],
    weights: &[T],
    dout: &[T],
    dims: ConvDims,
    offsets: &[(isize, isize)],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hw = dims.h * dims.w;
    let e = offsets.len();
    let mut dx = vec![T::zero(); dims.cin * hw];
    let mut dw = vec![T::zero(); weights.len()];
    let mut db = vec![T::zero(); dims.cout];
    for o in 0..dims.cout {
        let g = &dout[o * hw..(o + 1) * hw];
        db[o] = g.iter().copied().sum();
        for i in 0..dims.cin {
            let in_c = &x[i * hw..(i + 1) * hw];
            let dx_c = &mut dx[i * hw..(i + 1) * hw];
            for (k, &(dy, ddx)) in offsets.iter().enumerate() {
                let idx = (o * dims.cin + i) * e + k;
                dw[idx] = shift_dot(g, in_c, dims.h, dims.w, dy, ddx);
                // transpose of the shift
                shift_axpy(dx_c, g, dims.h, dims.w, -dy, -ddx, weights[idx]);
            }
        }
    }
    (dx, dw, db)
}

/// One of the four integer neighbours used by bilinear sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub dy: isize,
    pub dx: isize,
    pub coef: f64,
    /// d coef / d position_y
    pub dcoef_y: f64,
    /// d coef / d position_x
    pub dcoef_x: f64,
}

/// Bilinear decomposition of a real-valued offset.
pub fn bilinear_corners(py: f64, px: f64) -> [Corner; 4] {
    let iy = crate::math::floor(py);
    let ix = crate::math::floor(px);
    let fy = py - iy;
    let fx = px - ix;
    let (iy, ix) = (iy as isize, ix as isize);
    [
        Corner { dy: iy, dx: ix, coef: (1.0 - fy) * (1.0 - fx), dcoef_y: -(1.0 - fx), dcoef_x: -(1.0 - fy) },
        Corner { dy: iy, dx: ix + 1, coef: (1.0 - fy) * fx, dcoef_y: -fx, dcoef_x: 1.0 - fy },
        Corner { dy: iy + 1, dx: ix, coef: fy * (1.0 - fx), dcoef_y: 1.0 - fx, dcoef_x: -fy },
        Corner { dy: iy + 1, dx: ix + 1, coef: fy * fx, dcoef_y: fx, dcoef_x: fy },
    ]
}

/// Convolution with learnable real-valued element positions.
/// `weights` is `[cout, cin, E]`, `positions` is `[E, 2]` as `(y, x)`.
pub(crate) fn ldconv_forward<T: Scalar>(
    x: &[T],
    weights: &[T],
    positions: &[T],
    bias: Option<&[T]>,
    dims: ConvDims,
) -> Vec<T> {
    let hw = dims.h * dims.w;
    let e = positions.len() / 2;
    let corners: Vec<[Corner; 4]> =
        (0..e).map(|k| bilinear_corners(positions[2 * k].as_f64(), positions[2 * k + 1].as_f64())).collect();
    let mut out = vec![T::zero(); dims.cout * hw];
    for o in 0..dims.cout {
        let out_c = &mut out[o * hw..(o + 1) * hw];
        if let Some(b) = bias {
            out_c.iter_mut().for_each(|v| *v = b[o]);
        }
        for i in 0..dims.cin {
            let in_c = &x[i * hw..(i + 1) * hw];
            for (k, cs) in corners.iter().enumerate() {
                let wv = weights[(o * dims.cin + i) * e + k];
                for c in cs {
                    if c.coef == 0.0 {
                        continue;
                    }
                    let s = if c.coef == 1.0 { wv } else { wv * T::of(c.coef) };
                    shift_axpy(out_c, in_c, dims.h, dims.w, c.dy, c.dx, s);
                }
            }
        }
    }
    out
}

/// Gradients of [`ldconv_forward`]: `(dx, dweights, dpositions, dbias)`.
pub(crate) fn ldconv_backward<T: Scalar>(
    x: &[T],
    weights: &[T],
    positions: &[T],
    dout: &[T],
    dims: ConvDims,
) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
    let hw = dims.h * dims.w;
    let e = positions.len() / 2;
    let corners: Vec<[Corner; 4]> =
        (0..e).map(|k| bilinear_corners(positions[2 * k].as_f64(), positions[2 * k + 1].as_f64())).collect();
    let mut dx = vec![T::zero(); dims.cin * hw];
    let mut dw = vec![T::zero(); weights.len()];
    let mut dp = vec![T::zero(); positions.len()];
    let mut db = vec![T::zero(); dims.cout];
    for o in 0..dims.cout {
        let g = &dout[o * hw..(o + 1) * hw];
        db[o] = g.iter().copied().sum();
        for i in 0..dims.cin {
            let in_c = &x[i * hw..(i + 1) * hw];
            let dx_c = &mut dx[i * hw..(i + 1) * hw];
            for (k, cs) in corners.iter().enumerate() {
                let idx = (o * dims.cin + i) * e + k;
                let wv = weights[idx];
                let mut gw = T::zero();
                let mut gy = T::zero();
                let mut gx = T::zero();
                for c in cs {
                    let corr = shift_dot(g, in_c, dims.h, dims.w, c.dy, c.dx);
                    gw = gw + T::of(c.coef) * corr;
                    gy = gy + T::of(c.dcoef_y) * corr;
                    gx = gx + T::of(c.dcoef_x) * corr;
                    if c.coef != 0.0 {
                        shift_axpy(dx_c, g, dims.h, dims.w, -c.dy, -c.dx, wv * T::of(c.coef));
                    }
                }
                dw[idx] = gw;
                dp[2 * k] = dp[2 * k] + wv * gy;
                dp[2 * k + 1] = dp[2 * k + 1] + wv * gx;
            }
        }
    }
    (dx, dw, dp, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &[f64], wts: &[f64], dims: ConvDims, k: usize, d: usize) -> Vec<f64> {
        let r = (k / 2) as isize;
        let mut out = vec![0.0; dims.cout * dims.h * dims.w];
        for o in 0..dims.cout {
            for y in 0..dims.h as isize {
                for xx in 0..dims.w as isize {
                    let mut s = 0.0;
                    for i in 0..dims.cin {
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let sy = y + (ky - r) * d as isize;
                                let sx = xx + (kx - r) * d as isize;
                                if sy >= 0 && sx >= 0 && sy < dims.h as isize && sx < dims.w as isize {
                                    s += wts[((o * dims.cin + i) * k + ky as usize) * k + kx as usize]
                                        * x[(i * dims.h + sy as usize) * dims.w + sx as usize];
                                }
                            }
                        }
                    }
                    out[(o * dims.h + y as usize) * dims.w + xx as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn matches_direct_definition() {
        let mut r = crate::rng::rng(8);
        let dims = ConvDims { cin: 2, cout: 3, h: 7, w: 5 };
        let x: Vec<f64> = (0..2 * 35).map(|_| crate::rng::gaussian(&mut r)).collect();
        let w: Vec<f64> = (0..3 * 2 * 9).map(|_| crate::rng::gaussian(&mut r)).collect();
        for d in 1..=3 {
            let got = conv_forward(&x, &w, None, dims, &grid_offsets(3, d));
            let want = naive_conv(&x, &w, dims, 3, d);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn corners_sum_to_one() {
        for &(py, px) in &[(0.3, -1.7), (2.0, 0.0), (-0.5, 0.25)] {
            let cs = bilinear_corners(py, px);
            let s: f64 = cs.iter().map(|c| c.coef).sum();
            assert!((s - 1.0).abs() < 1e-12);
            let sy: f64 = cs.iter().map(|c| c.dcoef_y).sum();
            assert!(sy.abs() < 1e-12);
        }
    }
}
