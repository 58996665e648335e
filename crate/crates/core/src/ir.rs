//! Orthonormal intermediate representation of imaginary-time Green's
//! functions.
//!
//! The kernel is sampled on composite Gauss–Legendre grids and the SVD
//! `√W A = U Σ Vᵀ` of the quadrature-weighted matrix is truncated at
//! `σ_l > ε σ_1`. The basis functions `φ_l(τ_i) = (u_l)_i / √w_i` are
//! piecewise polynomials, orthonormal on `[0, 1]`. An interpolative
//! decomposition `Φ = R φ` selects `r` sampling nodes and the transform
//! `T = Φᵀ W R` maps values at those nodes to expansion coefficients.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dlr::{BasisSpec, DlrBasis, DlrExpansion};
use crate::error::{Error, Result};
use crate::grids::{omega_fine_grid_legendre, tau_fine_grid_legendre, FineGrid};
use crate::kernel::k_tau_unchecked;
use crate::lowrank::{interp_decomp_rank, matvec, truncated_svd};

/// Orthonormal basis built from the weighted SVD of the kernel.
#[derive(Clone, Debug)]
pub struct IrBasis {
    spec: BasisSpec,
    grid: FineGrid,
    weights: Vec<f64>,
    singular_values: Vec<f64>,
    first_discarded: Option<f64>,
    /// `M × r` left singular vectors.
    u: DMatrix<f64>,
    /// `N × r` right singular vectors on the frequency grid; absent after
    /// deserialization.
    v: Option<DMatrix<f64>>,
    /// `M × r` basis values `φ_l(τ_i)`.
    phi: DMatrix<f64>,
    sampling_index: Vec<usize>,
    sampling_nodes: Vec<f64>,
    transform: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct IrRecord {
    spec: BasisSpec,
    singular_values: Vec<f64>,
    /// Columns of `U`.
    u_table: Vec<Vec<f64>>,
    sampling_nodes: Vec<f64>,
    /// Rows of `T`.
    transform: Vec<Vec<f64>>,
}

/// Quadrature-weighted kernel matrix `√w_i K(τ_i, ω_j)` on the Legendre grids.
pub fn weighted_kernel_matrix(spec: &BasisSpec) -> Result<(FineGrid, FineGrid, DMatrix<f64>)> {
    spec.validate()?;
    let tg = tau_fine_grid_legendre(spec.lambda, spec.p)?;
    let og = omega_fine_grid_legendre(spec.lambda, spec.p)?;
    let w = tg.weights.as_ref().expect("Legendre grid has weights");
    let a = DMatrix::from_fn(tg.len(), og.len(), |i, j| w[i].sqrt() * k_tau_unchecked(tg.nodes[i], og.nodes[j]));
    Ok((tg, og, a))
}

impl IrBasis {
    pub fn build(spec: BasisSpec) -> Result<Self> {
        let (grid, _og, a) = weighted_kernel_matrix(&spec)?;
        let svd = truncated_svd(&a, spec.eps)?;
        let r = svd.rank();
        if r == 0 {
            return Err(Error::NoConvergence("kernel matrix has no singular values above the cutoff".into()));
        }
        let mut u = svd.u;
        let mut v = svd.v_t.transpose();
        let weights = grid.weights.clone().expect("Legendre grid has weights");
        // Fix signs so that φ_l(1) > 0.
        for l in 0..r {
            let vals: Vec<f64> = (0..grid.len()).map(|i| u[(i, l)] / weights[i].sqrt()).collect();
            if grid.interpolate(&vals, 1.0) < 0.0 {
                u.column_mut(l).neg_mut();
                v.column_mut(l).neg_mut();
            }
        }
        let mut basis = Self::assemble(spec, grid, u, svd.singular_values, None)?;
        basis.first_discarded = Some(svd.first_discarded);
        basis.v = Some(v);
        Ok(basis)
    }

    /// Derives `Φ`, the sampling nodes and `T` from `U`. With `nodes` given,
    /// the sampling nodes are taken from it instead of a fresh decomposition.
    fn assemble(
        spec: BasisSpec,
        grid: FineGrid,
        u: DMatrix<f64>,
        singular_values: Vec<f64>,
        nodes: Option<(&[f64], DMatrix<f64>)>,
    ) -> Result<Self> {
        let weights = grid.weights.clone().ok_or_else(|| Error::Domain("IR grid needs quadrature weights".into()))?;
        let r = u.ncols();
        let phi = DMatrix::from_fn(grid.len(), r, |i, l| u[(i, l)] / weights[i].sqrt());
        let (sampling_index, transform) = match nodes {
            Some((xs, t)) => {
                let idx = xs
                    .iter()
                    .map(|x| {
                        grid.nodes
                            .iter()
                            .position(|y| y == x)
                            .ok_or_else(|| Error::Incompatible(format!("sampling node {x} is not a grid node")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (idx, t)
            }
            None => {
                let id = interp_decomp_rank(&phi.transpose(), r)?;
                if id.rank() != r {
                    return Err(Error::NoConvergence(format!("sampling selection found {} of {r} nodes", id.rank())));
                }
                // R = Pᵀ, T = Φᵀ W R, with the nodes sorted ascending.
                let mut order: Vec<usize> = (0..r).collect();
                order.sort_by_key(|&k| id.pivots[k]);
                let idx: Vec<usize> = order.iter().map(|&k| id.pivots[k]).collect();
                let wr = DMatrix::from_fn(grid.len(), r, |i, k| weights[i] * id.projection[(order[k], i)]);
                (idx, phi.transpose() * wr)
            }
        };
        let sampling_nodes = sampling_index.iter().map(|&i| grid.nodes[i]).collect();
        Ok(Self {
            spec,
            grid,
            weights,
            singular_values,
            first_discarded: None,
            u,
            v: None,
            phi,
            sampling_index,
            sampling_nodes,
            transform,
        })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `σ_{r+1}`, the spectral norm of the truncation error; known only for
    /// freshly built bases.
    pub fn first_discarded(&self) -> Option<f64> {
        self.first_discarded
    }

    /// Composite Legendre grid on `[0, 1]`.
    pub fn grid(&self) -> &FineGrid {
        &self.grid
    }

    /// Quadrature weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Left singular vectors (`M × r`).
    pub fn u_table(&self) -> &DMatrix<f64> {
        &self.u
    }

    /// Right singular vectors (`N × r`), when available.
    pub fn v_table(&self) -> Option<&DMatrix<f64>> {
        self.v.as_ref()
    }

    /// `Φ_il = φ_l(τ_i)` on the fine grid.
    pub fn phi_table(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn sampling_nodes(&self) -> &[f64] {
        &self.sampling_nodes
    }

    /// Fine-grid indices of the sampling nodes.
    pub fn sampling_index(&self) -> &[usize] {
        &self.sampling_index
    }

    /// `T` with `ĝ = T g` for values `g` at the sampling nodes.
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    /// `φ_l(τ)` for `1 ≤ l ≤ r` and `τ ∈ [0, 1]`.
    pub fn eval_phi(&self, l: usize, tau: f64) -> Result<f64> {
        if l == 0 || l > self.rank() {
            return Err(Error::Domain(format!("basis index {l} outside 1..={}", self.rank())));
        }
        check_tau(tau)?;
        Ok(self.grid.interpolate(self.phi.column(l - 1).as_slice(), tau))
    }

    /// All basis functions at `τ ∈ [0, 1]`.
    pub fn eval_all(&self, tau: f64) -> Result<Vec<f64>> {
        check_tau(tau)?;
        let (s, l) = self.grid.lagrange_row(tau);
        Ok((0..self.rank()).map(|c| l.iter().enumerate().map(|(k, lk)| lk * self.phi[(s + k, c)]).sum()).collect())
    }

    /// `Σ_l ĝ_l φ_l(τ)`.
    pub fn eval(&self, coeffs: &[f64], tau: f64) -> Result<f64> {
        self.check_len(coeffs.len(), self.rank())?;
        Ok(self.eval_all(tau)?.iter().zip(coeffs).map(|(p, c)| p * c).sum())
    }

    /// Projection coefficients `ĝ_l = Σ_i (u_l)_i G(τ_i) √w_i` from values on
    /// the fine grid.
    pub fn coeffs_fine(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_len(values.len(), self.grid.len())?;
        Ok((0..self.rank())
            .map(|l| (0..self.grid.len()).map(|i| self.u[(i, l)] * values[i] * self.weights[i].sqrt()).sum())
            .collect())
    }

    /// Coefficients `T g` from values at the sampling nodes.
    pub fn coeffs_from_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.check_len(samples.len(), self.rank())?;
        Ok(matvec(&self.transform, samples))
    }

    /// Coefficients from values at the Matsubara nodes of a DLR basis with
    /// the same `Λ` and `ε`: DLR fit, evaluation at the sampling nodes, then
    /// `T`.
    pub fn coeffs_from_matsubara(&self, dlr: &DlrBasis, samples: &[Complex64]) -> Result<Vec<f64>> {
        let d = dlr.spec();
        if d.lambda != self.spec.lambda || d.eps != self.spec.eps {
            return Err(Error::Incompatible(format!(
                "DLR basis (Λ = {}, ε = {}) does not match IR basis (Λ = {}, ε = {})",
                d.lambda, d.eps, self.spec.lambda, self.spec.eps
            )));
        }
        let g = DlrExpansion::fit_matsubara(dlr, samples)?;
        let vals: Vec<f64> = self.sampling_nodes.iter().map(|&t| g.eval_tau(t)).collect();
        self.coeffs_from_samples(&vals)
    }

    /// Largest deviation of the Gram matrix `Uᵀ U` (equal to the exact
    /// integrals `∫ φ_k φ_l`) from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let g = self.u.transpose() * &self.u;
        let r = self.rank();
        (0..r)
            .flat_map(|k| (0..r).map(move |l| (k, l)))
            .map(|(k, l)| (g[(k, l)] - if k == l { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = IrRecord {
            spec: self.spec,
            singular_values: self.singular_values.clone(),
            u_table: self.u.column_iter().map(|c| c.iter().copied().collect()).collect(),
            sampling_nodes: self.sampling_nodes.clone(),
            transform: self.transform.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: IrRecord = serde_json::from_str(s)?;
        rec.spec.validate()?;
        let grid = tau_fine_grid_legendre(rec.spec.lambda, rec.spec.p)?;
        let r = rec.singular_values.len();
        let m = grid.len();
        if rec.u_table.len() != r || rec.u_table.iter().any(|c| c.len() != m) {
            return Err(Error::Incompatible("u_table does not match the grid".into()));
        }
        if rec.sampling_nodes.len() != r || rec.transform.len() != r || rec.transform.iter().any(|row| row.len() != r) {
            return Err(Error::Incompatible("sampling data does not match the rank".into()));
        }
        let u = DMatrix::from_fn(m, r, |i, l| rec.u_table[l][i]);
        let t = DMatrix::from_fn(r, r, |i, j| rec.transform[i][j]);
        Self::assemble(rec.spec, grid, u, rec.singular_values, Some((&rec.sampling_nodes, t)))
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::LengthMismatch { expected, got });
        }
        Ok(())
    }
}

/// Builds the basis for `spec`.
pub fn build_ir(spec: BasisSpec) -> Result<IrBasis> {
    IrBasis::build(spec)
}

/// `φ_l(τ)`, `1 ≤ l ≤ r`.
pub fn eval_phi(basis: &IrBasis, l: usize, tau: f64) -> Result<f64> {
    basis.eval_phi(l, tau)
}

/// Projection coefficients from values on the fine grid.
pub fn ir_coeffs_fine(basis: &IrBasis, values: &[f64]) -> Result<Vec<f64>> {
    basis.coeffs_fine(values)
}

/// Sampling nodes and transform matrix.
pub fn ir_sampling(basis: &IrBasis) -> (&[f64], &DMatrix<f64>) {
    (basis.sampling_nodes(), basis.transform())
}

/// Coefficients from samples at the Matsubara nodes of `dlr`.
pub fn ir_from_matsubara(basis: &IrBasis, dlr: &DlrBasis, samples: &[Complex64]) -> Result<Vec<f64>> {
    basis.coeffs_from_matsubara(dlr, samples)
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau = {tau} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> IrBasis {
        IrBasis::build(BasisSpec::new(100.0, 1e-10).unwrap()).unwrap()
    }

    #[test]
    fn orthonormal_and_sign_fixed() {
        let b = basis();
        assert!(b.orthonormality_residual() < 1e-12);
        for l in 1..=b.rank() {
            assert!(b.eval_phi(l, 1.0).unwrap() > 0.0);
        }
        assert!(b.singular_values().windows(2).all(|w| w[0] >= w[1] && w[1] > 0.0));
        assert!(b.eval_phi(0, 0.5).is_err());
        assert!(b.eval_phi(1, 1.5).is_err());
    }

    #[test]
    fn collocation_and_eval_all_agree() {
        let b = basis();
        let i = 17;
        let t = b.grid().nodes[i];
        let all = b.eval_all(t).unwrap();
        for l in 1..=b.rank() {
            let direct = b.u_table()[(i, l - 1)] / b.weights()[i].sqrt();
            assert!((b.eval_phi(l, t).unwrap() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            assert!((all[l - 1] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn transform_recovers_basis_functions() {
        let b = basis();
        for l in 1..=b.rank() {
            let g: Vec<f64> = b.sampling_index().iter().map(|&i| b.phi_table()[(i, l - 1)]).collect();
            let c = b.coeffs_from_samples(&g).unwrap();
            for (k, v) in c.iter().enumerate() {
                let e = if k + 1 == l { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-10, "l = {l}, k = {k}: {v}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let b = basis();
        let c = IrBasis::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(c.sampling_nodes(), b.sampling_nodes());
        assert_eq!(c.transform(), b.transform());
        assert_eq!(c.u_table(), b.u_table());
        assert!(c.v_table().is_none());
    }
}
