//! Minimal dense-tensor engine with hand-written backward passes.
//!
//! Activations use a channel-major `[C, B, L]` layout so that every
//! per-position linear map (1x1 and k-tap convolutions, projections) is a
//! single `[out, in] x [in, B*L]` matrix product.

mod attention;
mod layers;
mod optim;
mod params;

pub use attention::{scaled_dot_attention, Attention, AttentionCache};
pub use layers::{
    add_channel_bias, concat_channels, positional_table, silu, silu_backward, sinusoidal_embedding,
    split_channels, sum_over_length, upsample2, upsample2_backward, Conv1d, ConvCache, GroupNorm,
    LayerNorm, Linear, LinearCache, NormCache,
};
pub use optim::AdamW;
pub use params::{Grads, Init, ParamBuilder, ParamEntry, ParamId, ParamSet};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating point element type usable by the engine.
pub trait Scalar:
    Float + Debug + Default + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static
{
    /// # Safety
    /// Pointers and strides must address valid `m x k`, `k x n` and
    /// `m x n` regions; see [`matrixmultiply::sgemm`].
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable constant")
    }

    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided read-only matrix view into a slice.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatRef<'a, T> {
    pub fn contiguous(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn last_index(&self) -> usize {
        self.offset + (self.rows.max(1) - 1) * self.rs + (self.cols.max(1) - 1) * self.cs
    }
}

pub struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> MatMut<'a, T> {
    pub fn contiguous(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }
}

/// `c = alpha * a * b + beta * c`. With `beta == 0` the old contents of `c`
/// are ignored.
pub fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: MatMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    assert_eq!(a.rows, c.rows, "gemm output rows");
    assert_eq!(b.cols, c.cols, "gemm output cols");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    assert!(a.last_index() < a.data.len(), "gemm lhs view out of bounds");
    assert!(b.last_index() < b.data.len(), "gemm rhs view out of bounds");
    let c_last = c.offset + (c.rows - 1) * c.rs + (c.cols - 1) * c.cs;
    assert!(c_last < c.data.len(), "gemm output view out of bounds");
    // SAFETY: all three views were bounds checked above and the output
    // slice is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        )
    }
}

/// Activation tensor, layout `[C, B, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub b: usize,
    pub l: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Act<T> {
    pub fn zeros(c: usize, b: usize, l: usize) -> Self {
        Self {
            c,
            b,
            l,
            data: vec![T::zero(); c * b * l],
        }
    }

    pub fn from_vec(c: usize, b: usize, l: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * b * l, "activation data length");
        Self { c, b, l, data }
    }

    /// Builds a single-channel activation from per-sample rows.
    pub fn from_rows(rows: &[&[f32]]) -> Self {
        let b = rows.len();
        let l = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(b * l);
        for r in rows {
            assert_eq!(r.len(), l, "ragged rows");
            data.extend(r.iter().map(|&v| T::of(v as f64)));
        }
        Self { c: 1, b, l, data }
    }

    /// Channel `c` of sample `b`.
    pub fn row(&self, c: usize, b: usize) -> &[T] {
        let start = (c * self.b + b) * self.l;
        &self.data[start..start + self.l]
    }

    pub fn row_mut(&mut self, c: usize, b: usize) -> &mut [T] {
        let start = (c * self.b + b) * self.l;
        &mut self.data[start..start + self.l]
    }

    pub fn cols(&self) -> usize {
        self.b * self.l
    }

    pub fn mat(&self) -> MatRef<'_, T> {
        MatRef::contiguous(&self.data, self.c, self.b * self.l)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.b, self.l)
    }

    pub fn add_assign(&mut self, other: &Act<T>) {
        assert_eq!(self.shape(), other.shape(), "activation add shape");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Act<U> {
        Act {
            c: self.c,
            b: self.b,
            l: self.l,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}
