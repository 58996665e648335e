use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Singular value decomposition truncated to the singular values above a
/// threshold; values sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
    /// Largest discarded singular value (zero if none was discarded).
    pub first_discarded: f64,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

fn full_sorted(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix has NaN or infinite entries".into()));
    }
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::NoConvergence("singular value decomposition".into()))?;
    let u = svd.u.ok_or_else(|| Error::NoConvergence("left singular vectors".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::NoConvergence("right singular vectors".into()))?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = u.select_columns(&order);
    let v_t = v_t.select_rows(&order);
    let s = order.iter().map(|&i| s[i]).collect();
    Ok((u, s, v_t))
}

/// Keeps the singular values `σ_l > tol · σ_0`.
pub fn truncated_svd(a: &DMatrix<f64>, tol: f64) -> Result<TruncatedSvd> {
    truncated_svd_by(a, |s0| tol * s0)
}

/// Keeps the singular values above `cut(σ_0)`.
pub fn truncated_svd_by<F: Fn(f64) -> f64>(a: &DMatrix<f64>, cut: F) -> Result<TruncatedSvd> {
    let (u, s, v_t) = full_sorted(a)?;
    let s0 = s.first().copied().unwrap_or(0.0);
    let threshold = cut(s0);
    let r = s.iter().take_while(|&&v| v > threshold && v > 0.0).count();
    Ok(TruncatedSvd {
        u: u.columns(0, r).into_owned(),
        singular_values: s[..r].to_vec(),
        v_t: v_t.rows(0, r).into_owned(),
        first_discarded: s.get(r).copied().unwrap_or(0.0),
    })
}

/// All singular values, decreasing.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix has NaN or infinite entries".into()));
    }
    let mut s: Vec<f64> = a
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::NoConvergence("singular value decomposition".into()))?
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Spectral norm.
pub fn norm2(a: &DMatrix<f64>) -> f64 {
    singular_values(a).ok().and_then(|s| s.first().copied()).unwrap_or(f64::NAN)
}

/// Spectral condition number `σ_max/σ_min`.
pub fn cond2(a: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        _ => Ok(f64::INFINITY),
    }
}
