use nalgebra::DMatrix;

use super::Scalar;
use crate::error::{Error, Result};

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T: Scalar> {
    lu: DMatrix<T>,
    /// `perm[i]` is the original row placed at position `i`.
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: a.ncols() });
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix has NaN or infinite entries".into()));
        }
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n).map(|i| (i, lu[(i, k)].abs())).fold((k, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            if best == 0.0 {
                return Err(Error::Singular(k));
            }
            if p != k {
                lu.swap_rows(k, p);
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / pivot;
                lu[(i, k)] = l;
                if l != T::zero() {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= l * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// Solves `A x = b`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b.len())?;
        let n = self.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solves `Aᵀ x = b` (plain transpose, no conjugation).
    #[allow(clippy::needless_range_loop)]
    pub fn solve_transpose(&self, b: &[T]) -> Result<Vec<T>> {
        self.check_len(b.len())?;
        let n = self.dim();
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ y = b, Lᵀ z = y, x = Pᵀ z.
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.lu[(j, i)] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (k, &i) in self.perm.iter().enumerate() {
            x[i] = y[k];
        }
        Ok(x)
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<T>) -> Result<DMatrix<T>> {
        self.check_len(b.nrows())?;
        let mut out = b.clone();
        for j in 0..b.ncols() {
            let col: Vec<T> = b.column(j).iter().copied().collect();
            let x = self.solve(&col)?;
            out.column_mut(j).copy_from_slice(&x);
        }
        Ok(out)
    }

    /// Explicit inverse.
    pub fn inverse(&self) -> Result<DMatrix<T>> {
        let n = self.dim();
        self.solve_matrix(&DMatrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() }))
    }
}
