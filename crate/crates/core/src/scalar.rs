//! Scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

use crate::error::AnmError;

/// Floating-point type the crate is generic over (`f32` or `f64`).
pub trait Real:
    RealField
    + Copy
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    /// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
    fn hermitian_eigen(
        h: &DMatrix<Complex<Self>>,
    ) -> Result<(Vec<Self>, DMatrix<Complex<Self>>), AnmError>;

    /// Positive part of a Hermitian matrix together with its smallest
    /// eigenvalue and the number of positive eigenvalues kept.
    fn positive_part(
        h: &DMatrix<Complex<Self>>,
    ) -> Result<(DMatrix<Complex<Self>>, Self, usize), AnmError>;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn hermitian_eigen(
                h: &DMatrix<Complex<Self>>,
            ) -> Result<(Vec<Self>, DMatrix<Complex<Self>>), AnmError> {
                let n = h.nrows();
                let m = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| h[(i, j)]);
                let eig = m
                    .self_adjoint_eigen(faer::Side::Lower)
                    .map_err(|e| AnmError::Numerical(format!("eigensolver failed on {n}x{n}: {e:?}")))?;
                let s = eig.S().column_vector();
                let u = eig.U();
                let vals = (0..n).map(|i| s[i].re).collect();
                let vecs = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
                Ok((vals, vecs))
            }

            fn positive_part(
                h: &DMatrix<Complex<Self>>,
            ) -> Result<(DMatrix<Complex<Self>>, Self, usize), AnmError> {
                let n = h.nrows();
                let m = faer::Mat::<Complex<$t>>::from_fn(n, n, |i, j| h[(i, j)]);
                let eig = m
                    .self_adjoint_eigen(faer::Side::Lower)
                    .map_err(|e| AnmError::Numerical(format!("eigensolver failed on {n}x{n}: {e:?}")))?;
                let s = eig.S().column_vector();
                let u = eig.U();
                if (0..n).any(|i| !s[i].re.is_finite()) {
                    return Err(AnmError::Numerical(format!(
                        "non-finite eigenvalue in {n}x{n} Hermitian matrix"
                    )));
                }
                let min = if n == 0 { 0.0 } else { s[0].re };
                // eigenvalues come back ascending
                let first = (0..n).find(|&i| s[i].re > 0.0).unwrap_or(n);
                let r = n - first;
                if r == 0 {
                    return Ok((DMatrix::zeros(n, n), min, 0));
                }
                let w = faer::Mat::<Complex<$t>>::from_fn(n, r, |i, k| {
                    u[(i, first + k)] * s[first + k].re.sqrt()
                });
                let p = &w * w.adjoint();
                Ok((DMatrix::from_fn(n, n, |i, j| p[(i, j)]), min, r))
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);
