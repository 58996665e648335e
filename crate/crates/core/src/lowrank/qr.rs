use nalgebra::DMatrix;

use super::{matmul, vec_norm, Scalar};

/// Unscaled Euclidean norm; column entries here never approach overflow.
fn fast_norm<T: Scalar>(x: &[T]) -> f64 {
    x.iter().map(|v| v.abs2()).sum::<f64>().sqrt()
}
use crate::error::{Error, Result};

/// Householder QR with greedy column pivoting, truncated at the numerical
/// rank.
#[derive(Clone, Debug)]
pub struct PivotedQr<T: Scalar> {
    rank: usize,
    pivots: Vec<usize>,
    /// Rows `0..rank` of `R` in pivoted column order (`rank × n`).
    r: DMatrix<T>,
    /// Householder vectors; reflector `k` acts on rows `k..m`.
    reflectors: Vec<Vec<T>>,
    nrows: usize,
}

impl<T: Scalar> PivotedQr<T> {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Column permutation; the first `rank` entries are the selected columns
    /// in the order they were chosen.
    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn selected(&self) -> &[usize] {
        &self.pivots[..self.rank]
    }

    /// Triangular factor restricted to the first `rank` rows, columns in
    /// pivoted order.
    pub fn r(&self) -> &DMatrix<T> {
        &self.r
    }

    /// Magnitudes of the diagonal of `R`.
    pub fn diag_abs(&self) -> Vec<f64> {
        (0..self.rank).map(|k| self.r[(k, k)].abs()).collect()
    }

    /// Orthonormal factor `Q` (`m × rank`).
    pub fn q(&self) -> DMatrix<T> {
        let m = self.nrows;
        let mut q = DMatrix::from_fn(m, self.rank, |i, j| if i == j { T::one() } else { T::zero() });
        for k in (0..self.rank).rev() {
            let v = &self.reflectors[k];
            let vv: f64 = v.iter().map(|x| x.abs2()).sum();
            if vv == 0.0 {
                continue;
            }
            for j in 0..self.rank {
                let mut col = q.column_mut(j);
                let s = v.iter().zip(col.iter().skip(k)).fold(T::zero(), |acc, (&vi, &ci)| acc + vi.conj() * ci);
                let f = s * T::from_real(2.0 / vv);
                for (ci, &vi) in col.iter_mut().skip(k).zip(v) {
                    *ci -= vi * f;
                }
            }
        }
        q
    }

    /// Rank-`r` approximation `Q R Πᵀ` in the original column order.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let qr = matmul(&self.q(), &self.r);
        let mut out = DMatrix::from_element(self.nrows, self.pivots.len(), T::zero());
        for (jj, &j) in self.pivots.iter().enumerate() {
            out.set_column(j, &qr.column(jj));
        }
        out
    }
}

fn check_finite<T: Scalar>(a: &DMatrix<T>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("matrix has NaN or infinite entries".into()))
    }
}

/// Rank-revealing pivoted QR: stops when the largest remaining column norm
/// falls to `tol` times the first pivot's norm.
pub fn pivoted_qr<T: Scalar>(matrix: &DMatrix<T>, tol: f64) -> Result<PivotedQr<T>> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tolerance {tol} must lie in (0, 1)")));
    }
    check_finite(matrix)?;
    Ok(factor(matrix.clone(), tol, usize::MAX))
}

/// Pivoted QR run for exactly `min(rank, m, n)` steps (fewer only if the
/// remaining columns vanish identically).
pub fn pivoted_qr_rank<T: Scalar>(matrix: &DMatrix<T>, rank: usize) -> Result<PivotedQr<T>> {
    check_finite(matrix)?;
    Ok(factor(matrix.clone(), 0.0, rank))
}

pub(crate) fn factor<T: Scalar>(mut a: DMatrix<T>, tol: f64, max_rank: usize) -> PivotedQr<T> {
    let (m, n) = a.shape();
    let steps = m.min(n).min(max_rank);
    let mut pivots: Vec<usize> = (0..n).collect();
    let data = a.as_mut_slice();
    let mut norms: Vec<f64> = data.chunks(m.max(1)).map(fast_norm).collect();
    let mut reflectors = Vec::with_capacity(steps.min(n));
    let mut first = 0.0;
    let mut rank = 0;

    for k in 0..steps {
        let (jmax, &nmax) =
            norms[k..].iter().enumerate().fold((0, &-1.0), |best, (j, v)| if *v > *best.1 { (j, v) } else { best });
        let jmax = jmax + k;
        if k == 0 {
            first = nmax;
        }
        if nmax <= 0.0 || nmax <= tol * first {
            break;
        }
        if jmax != k {
            for i in 0..m {
                data.swap(k * m + i, jmax * m + i);
            }
            norms.swap(k, jmax);
            pivots.swap(k, jmax);
        }

        // Householder vector for column k, rows k..m.
        let col = &mut data[k * m..(k + 1) * m];
        let xnorm = vec_norm(&col[k..]);
        let alpha = -(col[k].phase()) * T::from_real(xnorm);
        let mut v: Vec<T> = col[k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x.abs2()).sum();
        col[k] = alpha;
        for x in col[k + 1..].iter_mut() {
            *x = T::zero();
        }
        rank = k + 1;

        if vv > 0.0 {
            let scale = T::from_real(2.0 / vv);
            let vref = &v;
            data[(k + 1) * m..].chunks_mut(m).zip(norms[k + 1..].iter_mut()).for_each(|(c, nrm)| {
                let tail = &mut c[k..];
                let s = vref.iter().zip(tail.iter()).fold(T::zero(), |acc, (&vi, &ci)| acc + vi.conj() * ci);
                let f = s * scale;
                for (ci, &vi) in tail.iter_mut().zip(vref) {
                    *ci -= vi * f;
                }
                *nrm = fast_norm(&tail[1..]);
            });
        } else {
            data[(k + 1) * m..]
                .chunks(m)
                .zip(norms[k + 1..].iter_mut())
                .for_each(|(c, nrm)| *nrm = fast_norm(&c[k + 1..]));
        }
        reflectors.push(v);
    }

    let r = DMatrix::from_fn(rank, n, |i, j| if i <= j { a[(i, j)] } else { T::zero() });
    PivotedQr { rank, pivots, r, reflectors, nrows: m }
}

/// Interpolative decomposition `A ≈ B P` with `B` the selected columns of `A`.
#[derive(Clone, Debug)]
pub struct InterpDecomp<T: Scalar> {
    /// Selected column indices, in pivot order.
    pub pivots: Vec<usize>,
    /// `rank × n` coefficient matrix; `P[:, pivots[k]] = e_k`.
    pub projection: DMatrix<T>,
}

impl<T: Scalar> InterpDecomp<T> {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// The skeleton matrix `B = A[:, pivots]`.
    pub fn skeleton(&self, a: &DMatrix<T>) -> DMatrix<T> {
        a.select_columns(&self.pivots)
    }

    /// `B P`.
    pub fn reconstruct(&self, a: &DMatrix<T>) -> DMatrix<T> {
        matmul(&self.skeleton(a), &self.projection)
    }
}

fn id_from_qr<T: Scalar>(qr: &PivotedQr<T>) -> InterpDecomp<T> {
    let r = qr.rank();
    let n = qr.pivots.len();
    let rm = &qr.r;
    // Solve R11 X = R12 by back substitution.
    let mut p = DMatrix::from_element(r, n, T::zero());
    for (k, &j) in qr.pivots[..r].iter().enumerate() {
        p[(k, j)] = T::one();
    }
    for c in r..n {
        let mut x = vec![T::zero(); r];
        for i in (0..r).rev() {
            let mut s = rm[(i, c)];
            for l in i + 1..r {
                s -= rm[(i, l)] * x[l];
            }
            x[i] = s / rm[(i, i)];
        }
        let j = qr.pivots[c];
        for i in 0..r {
            p[(i, j)] = x[i];
        }
    }
    InterpDecomp { pivots: qr.pivots[..r].to_vec(), projection: p }
}

/// Rank-revealing interpolative decomposition at relative tolerance `tol`.
pub fn interp_decomp<T: Scalar>(matrix: &DMatrix<T>, tol: f64) -> Result<InterpDecomp<T>> {
    Ok(id_from_qr(&pivoted_qr(matrix, tol)?))
}

/// Interpolative decomposition of fixed rank.
pub fn interp_decomp_rank<T: Scalar>(matrix: &DMatrix<T>, rank: usize) -> Result<InterpDecomp<T>> {
    Ok(id_from_qr(&pivoted_qr_rank(matrix, rank)?))
}
