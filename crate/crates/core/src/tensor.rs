//! Dense activation tensors and the GEMM entry point.
//!
//! Activations are stored channel-major (`[C, N, H, W]`): a convolution is
//! then a single matrix product `W[Cout, K] x cols[K, N*H*W]` over the whole
//! batch, and batch-norm statistics are reductions over contiguous rows.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point element type of the network engine.
///
/// Training runs in `f32`; the finite-difference gradient checker runs the
/// same code in `f64`.
pub trait Scalar:
    Float + AddAssign + SubAssign + MulAssign + DivAssign + Default + Debug + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C = alpha * A * B + beta * C` with arbitrary strides (row, column).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], isize, isize),
        b: (&[Self], isize, isize),
        beta: Self,
        c: (&mut [Self], isize, isize),
    );
}

fn check_span(len: usize, rows: usize, cols: usize, rs: isize, cs: isize) {
    if rows == 0 || cols == 0 {
        return;
    }
    assert!(rs >= 0 && cs >= 0, "negative strides are not supported");
    let last = (rows - 1) * rs as usize + (cols - 1) * cs as usize;
    assert!(last < len, "matrix view exceeds buffer ({last} >= {len})");
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], isize, isize),
                b: (&[Self], isize, isize),
                beta: Self,
                c: (&mut [Self], isize, isize),
            ) {
                check_span(a.0.len(), m, k, a.1, a.2);
                check_span(b.0.len(), k, n, b.1, b.2);
                check_span(c.0.len(), m, n, c.1, c.2);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every element addressed by the (dims, strides)
                // triples lies inside the corresponding slice (checked above)
                // and `c` is uniquely borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr(),
                        a.1,
                        a.2,
                        b.0.as_ptr(),
                        b.1,
                        b.2,
                        beta,
                        c.0.as_mut_ptr(),
                        c.1,
                        c.2,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// A `[channels, batch, height, width]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self { c, n, h, w, data: vec![T::zero(); c * n * h * w] }
    }

    /// Elements per channel row (`n * h * w`).
    #[inline]
    pub fn plane(&self) -> usize {
        self.n * self.h * self.w
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[T] {
        let p = self.plane();
        &self.data[c * p..(c + 1) * p]
    }

    /// Build from sample-major `[n][c][h][w]` data.
    pub fn from_nchw(n: usize, c: usize, h: usize, w: usize, src: &[T]) -> Self {
        assert_eq!(src.len(), n * c * h * w);
        let mut out = Self::zeros(c, n, h, w);
        let hw = h * w;
        for s in 0..n {
            for ch in 0..c {
                let from = (s * c + ch) * hw;
                let to = (ch * n + s) * hw;
                out.data[to..to + hw].copy_from_slice(&src[from..from + hw]);
            }
        }
        out
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.c == other.c && self.n == other.n && self.h == other.h && self.w == other.w
    }
}

impl<T: Scalar> Tensor4<T> {
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            c: self.c,
            n: self.n,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&x| U::of_f64(x.as_f64())).collect(),
        }
    }
}
