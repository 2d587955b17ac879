//! Convolution, batch normalization and ReLU with explicit backward passes.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{Scalar, Tensor4};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Rows of the im2col matrix (`in_c * kernel^2`).
    pub fn k_dim(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.k_dim()
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.pad - self.kernel) / self.stride + 1, (w + 2 * self.pad - self.kernel) / self.stride + 1)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output positions `[lo, hi)` along one axis whose input tap `k` is in bounds.
    fn valid_range(&self, k: usize, input: usize, output: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if p > k { (p - k).div_ceil(s) } else { 0 };
        let hi = if input + p > k { ((input - 1 + p - k) / s + 1).min(output) } else { 0 };
        (lo, hi.max(lo))
    }
}

/// Unfold `x` into `[k_dim, n * ho * wo]` patch columns (zero padded).
pub fn im2col<T: Scalar>(x: &Tensor4<T>, g: &ConvGeom, ho: usize, wo: usize) -> Vec<T> {
    let n_cols = x.n * ho * wo;
    let mut cols = vec![T::zero(); g.k_dim() * n_cols];
    let (h, w) = (x.h, x.w);
    for ci in 0..g.in_c {
        for ky in 0..g.kernel {
            let (oy_lo, oy_hi) = g.valid_range(ky, h, ho);
            for kx in 0..g.kernel {
                let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
                let row = (ci * g.kernel + ky) * g.kernel + kx;
                let dst_row = &mut cols[row * n_cols..(row + 1) * n_cols];
                for b in 0..x.n {
                    let src = &x.data[(ci * x.n + b) * h * w..(ci * x.n + b + 1) * h * w];
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.pad;
                        let srow = &src[iy * w..(iy + 1) * w];
                        let dst = &mut dst_row[(b * ho + oy) * wo..(b * ho + oy + 1) * wo];
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let ix0 = ox_lo * g.stride + kx - g.pad;
                        if g.stride == 1 {
                            dst[ox_lo..ox_hi].copy_from_slice(&srow[ix0..ix0 + (ox_hi - ox_lo)]);
                        } else {
                            for (j, ox) in (ox_lo..ox_hi).enumerate() {
                                dst[ox] = srow[ix0 + j * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into `dx`.
pub fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, ho: usize, wo: usize, dx: &mut Tensor4<T>) {
    let n_cols = dx.n * ho * wo;
    let (h, w) = (dx.h, dx.w);
    for ci in 0..g.in_c {
        for ky in 0..g.kernel {
            let (oy_lo, oy_hi) = g.valid_range(ky, h, ho);
            for kx in 0..g.kernel {
                let (ox_lo, ox_hi) = g.valid_range(kx, w, wo);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = (ci * g.kernel + ky) * g.kernel + kx;
                let src_row = &cols[row * n_cols..(row + 1) * n_cols];
                for b in 0..dx.n {
                    let base = (ci * dx.n + b) * h * w;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * g.stride + ky - g.pad;
                        let src = &src_row[(b * ho + oy) * wo..(b * ho + oy + 1) * wo];
                        let drow = &mut dx.data[base + iy * w..base + (iy + 1) * w];
                        let ix0 = ox_lo * g.stride + kx - g.pad;
                        for (j, ox) in (ox_lo..ox_hi).enumerate() {
                            drow[ix0 + j * g.stride] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Bias-free convolution; `weight` is `[out_c, in_c, k, k]`.
pub fn conv_forward<T: Scalar>(x: &Tensor4<T>, weight: &[T], g: &ConvGeom) -> Tensor4<T> {
    debug_assert_eq!(x.c, g.in_c);
    debug_assert_eq!(weight.len(), g.weight_len());
    let (ho, wo) = g.out_size(x.h, x.w);
    let mut out = Tensor4::zeros(g.out_c, x.n, ho, wo);
    let n_cols = x.n * ho * wo;
    let k = g.k_dim();
    let owned;
    let cols: &[T] = if g.is_pointwise() {
        &x.data
    } else {
        owned = im2col(x, g, ho, wo);
        &owned
    };
    T::gemm(
        g.out_c,
        k,
        n_cols,
        T::one(),
        (weight, k as isize, 1),
        (cols, n_cols as isize, 1),
        T::zero(),
        (&mut out.data, n_cols as isize, 1),
    );
    out
}

/// Accumulates the weight gradient into `dweight` (when given) and returns
/// the input gradient when `want_dx`.
pub fn conv_backward<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    g: &ConvGeom,
    dy: &Tensor4<T>,
    dweight: Option<&mut [T]>,
    want_dx: bool,
) -> Option<Tensor4<T>> {
    let (ho, wo) = (dy.h, dy.w);
    let n_cols = x.n * ho * wo;
    let k = g.k_dim();
    if let Some(dw) = dweight {
        let owned;
        let cols: &[T] = if g.is_pointwise() {
            &x.data
        } else {
            owned = im2col(x, g, ho, wo);
            &owned
        };
        // dW[out_c, k] += dY[out_c, n_cols] * cols^T
        T::gemm(
            g.out_c,
            n_cols,
            k,
            T::one(),
            (&dy.data, n_cols as isize, 1),
            (cols, 1, n_cols as isize),
            T::one(),
            (dw, k as isize, 1),
        );
    }
    if !want_dx {
        return None;
    }
    // dcols[k, n_cols] = W^T * dY
    let mut dcols = vec![T::zero(); k * n_cols];
    T::gemm(
        k,
        g.out_c,
        n_cols,
        T::one(),
        (weight, 1, k as isize),
        (&dy.data, n_cols as isize, 1),
        T::zero(),
        (&mut dcols, n_cols as isize, 1),
    );
    if g.is_pointwise() {
        return Some(Tensor4 { c: x.c, n: x.n, h: x.h, w: x.w, data: dcols });
    }
    let mut dx = Tensor4::zeros(x.c, x.n, x.h, x.w);
    col2im(&dcols, g, ho, wo, &mut dx);
    Some(dx)
}

/// Which statistics a batch-norm layer normalizes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch; running statistics are updated.
    Batch,
    /// Stored running statistics; nothing is updated.
    Running,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<T>,
    pub mode: BnMode,
}

/// Batch mean and unbiased variance per channel, for the running update.
pub struct BatchMoments {
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

/// Normalize `x` in place of its buffer. Returns the output, the cache for
/// the backward pass and, in batch mode, the batch moments.
pub fn bn_forward<T: Scalar>(
    mut x: Tensor4<T>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    mode: BnMode,
) -> (Tensor4<T>, BnCache<T>, Option<BatchMoments>) {
    let plane = x.plane();
    let mut inv_std = Vec::with_capacity(x.c);
    let mut moments = BatchMoments { mean: Vec::new(), var_unbiased: Vec::new() };
    let mut out = Tensor4::zeros(x.c, x.n, x.h, x.w);
    for c in 0..x.c {
        let row = &mut x.data[c * plane..(c + 1) * plane];
        let (mean, var) = match mode {
            BnMode::Batch => {
                let m = row.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
                let v = row
                    .iter()
                    .map(|v| {
                        let d = v.as_f64() - m;
                        d * d
                    })
                    .sum::<f64>()
                    / plane as f64;
                moments.mean.push(m);
                moments.var_unbiased.push(if plane > 1 { v * plane as f64 / (plane - 1) as f64 } else { v });
                (m, v)
            }
            BnMode::Running => (running_mean[c].as_f64(), running_var[c].as_f64()),
        };
        let is = T::of_f64(1.0 / libm::sqrt(var + BN_EPSILON));
        let m = T::of_f64(mean);
        let (g, b) = (gamma[c], beta[c]);
        let orow = &mut out.data[c * plane..(c + 1) * plane];
        for (xv, o) in row.iter_mut().zip(orow.iter_mut()) {
            *xv = (*xv - m) * is;
            *o = g * *xv + b;
        }
        inv_std.push(is);
    }
    let moments = (mode == BnMode::Batch).then_some(moments);
    (out, BnCache { xhat: x, inv_std, mode }, moments)
}

/// Backward of [`bn_forward`]: consumes `dy`, returns `(dx, dgamma, dbeta)`.
pub fn bn_backward<T: Scalar>(cache: &BnCache<T>, gamma: &[T], mut dy: Tensor4<T>) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let plane = dy.plane();
    let mut dgamma = Vec::with_capacity(dy.c);
    let mut dbeta = Vec::with_capacity(dy.c);
    let m = T::of_f64(plane as f64);
    for (c, &g) in gamma.iter().enumerate().take(dy.c) {
        let row = &mut dy.data[c * plane..(c + 1) * plane];
        let xhat = cache.xhat.channel(c);
        let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
        for (d, xh) in row.iter().zip(xhat) {
            sum_dy += d.as_f64();
            sum_dy_xhat += (*d * *xh).as_f64();
        }
        dgamma.push(T::of_f64(sum_dy_xhat));
        dbeta.push(T::of_f64(sum_dy));
        let is = cache.inv_std[c];
        match cache.mode {
            BnMode::Running => {
                let s = g * is;
                row.iter_mut().for_each(|d| *d *= s);
            }
            BnMode::Batch => {
                let s = g * is / m;
                let (sd, sdx) = (T::of_f64(sum_dy), T::of_f64(sum_dy_xhat));
                for (d, xh) in row.iter_mut().zip(xhat) {
                    *d = s * (m * *d - sd - *xh * sdx);
                }
            }
        }
    }
    (dy, dgamma, dbeta)
}

pub fn relu_in_place<T: Scalar>(x: &mut Tensor4<T>) {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero `dy` wherever the ReLU output was not positive.
pub fn relu_backward<T: Scalar>(dy: &mut Tensor4<T>, out: &Tensor4<T>) {
    for (d, o) in dy.data.iter_mut().zip(&out.data) {
        if *o <= T::zero() {
            *d = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution over sample-major data.
    fn naive_conv(x: &Tensor4<f64>, w: &[f64], g: &ConvGeom) -> Tensor4<f64> {
        let (ho, wo) = g.out_size(x.h, x.w);
        let mut out = Tensor4::zeros(g.out_c, x.n, ho, wo);
        for co in 0..g.out_c {
            for b in 0..x.n {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..g.in_c {
                            for ky in 0..g.kernel {
                                for kx in 0..g.kernel {
                                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                        continue;
                                    }
                                    let xv = x.data[((ci * x.n + b) * x.h + iy as usize) * x.w + ix as usize];
                                    acc += xv * w[((co * g.in_c + ci) * g.kernel + ky) * g.kernel + kx];
                                }
                            }
                        }
                        out.data[((co * x.n + b) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    fn filled(c: usize, n: usize, h: usize, w: usize, salt: f64) -> Tensor4<f64> {
        let mut t = Tensor4::zeros(c, n, h, w);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = ((i as f64 + salt) * 0.731).sin();
        }
        t
    }

    #[test]
    fn conv_matches_naive_for_all_geometries() {
        let geoms = [
            ConvGeom { in_c: 3, out_c: 4, kernel: 3, stride: 1, pad: 1 },
            ConvGeom { in_c: 2, out_c: 5, kernel: 3, stride: 2, pad: 1 },
            ConvGeom { in_c: 3, out_c: 2, kernel: 1, stride: 2, pad: 0 },
            ConvGeom { in_c: 3, out_c: 2, kernel: 1, stride: 1, pad: 0 },
        ];
        for g in geoms {
            let x = filled(g.in_c, 2, 7, 6, 0.5);
            let w: Vec<f64> = (0..g.weight_len()).map(|i| ((i as f64) * 0.37).cos()).collect();
            let got = conv_forward(&x, &w, &g);
            let want = naive_conv(&x, &w, &g);
            assert_eq!((got.h, got.w), (want.h, want.w));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12, "{g:?}");
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom { in_c: 2, out_c: 1, kernel: 3, stride: 2, pad: 1 };
        let x = filled(2, 3, 5, 5, 0.1);
        let (ho, wo) = g.out_size(5, 5);
        let cols = im2col(&x, &g, ho, wo);
        let c: Vec<f64> = (0..cols.len()).map(|i| ((i as f64) * 1.3).sin()).collect();
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = Tensor4::zeros(2, 3, 5, 5);
        col2im(&c, &g, ho, wo, &mut back);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn batch_norm_output_is_standardized() {
        let x = filled(2, 4, 3, 3, 2.0);
        let (out, _, moments) = bn_forward(x, &[1.0, 1.0], &[0.0, 0.0], &[0.0; 2], &[1.0; 2], BnMode::Batch);
        assert!(moments.is_some());
        for c in 0..2 {
            let row = out.channel(c);
            let m: f64 = row.iter().sum::<f64>() / row.len() as f64;
            let v: f64 = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn running_mode_reports_no_moments() {
        let x = filled(1, 2, 2, 2, 0.0);
        let (_, cache, moments) = bn_forward(x, &[2.0], &[1.0], &[0.5], &[4.0], BnMode::Running);
        assert!(moments.is_none());
        assert!((cache.inv_std[0] - 1.0 / (4.0f64 + BN_EPSILON).sqrt()).abs() < 1e-15);
    }
}
