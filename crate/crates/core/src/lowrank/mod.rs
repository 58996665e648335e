//! Dense linear algebra: rank-revealing pivoted QR, interpolative
//! decomposition, truncated SVD and LU solves over real and complex scalars.

mod lu;
mod qr;
mod svd;

pub use lu::Lu;
pub use qr::{interp_decomp, interp_decomp_rank, pivoted_qr, pivoted_qr_rank, InterpDecomp, PivotedQr};
pub use svd::{cond2, norm2, singular_values, truncated_svd, truncated_svd_by, TruncatedSvd};

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Field operations shared by `f64` and `Complex64`.
pub trait Scalar:
    nalgebra::Scalar
    + Copy
    + Send
    + Sync
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn abs(self) -> f64;
    fn abs2(self) -> f64;
    fn is_finite(self) -> bool;
    /// `x / |x|`, or one for zero.
    fn phase(self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn abs2(self) -> f64 {
        self * self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn phase(self) -> Self {
        let a = self.norm();
        if a == 0.0 {
            Self::one()
        } else {
            self / a
        }
    }
}

/// Euclidean norm of a slice.
pub fn vec_norm<T: Scalar>(x: &[T]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    x.iter().map(|v| (v.abs() / scale).powi(2)).sum::<f64>().sqrt() * scale
}

/// Dense product `A B`.
pub fn matmul<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::from_element(a.nrows(), b.ncols(), T::zero());
    for j in 0..b.ncols() {
        let y = matvec(a, b.column(j).as_slice());
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// `y = A x` for a column-major matrix.
pub fn matvec<T: Scalar>(a: &DMatrix<T>, x: &[T]) -> Vec<T> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![T::zero(); a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        for (yi, &aij) in y.iter_mut().zip(a.column(j).iter()) {
            *yi += aij * xj;
        }
    }
    y
}
