//! Imaginary-time convolution and Dyson solvers.
//!
//! The fermionic convolution on `[0, 1]`,
//!
//! ```text
//! f(τ) = ∫₀^τ Σ(τ-τ') G(τ') dτ' - ∫_τ^1 Σ(τ-τ'+1) G(τ') dτ',
//! ```
//!
//! is evaluated exactly for DLR expansions: for `Σ = K(·, ω_l)` and
//! `G = K(·, ω_k)` it equals `(K(τ, ω_k) - K(τ, ω_l)) / (ω_l - ω_k)`, with
//! limit `(τ - K(1, ω)) K(τ, ω)` on the diagonal.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dlr::{DlrBasis, DlrExpansion};
use crate::error::{Error, Result};
use crate::kernel::{k_one, k_tau_unchecked};
use crate::lowrank::{matvec, vec_norm, Lu};

/// Convolution of the kernels at frequencies `wj` and `wk`, evaluated at `tau`.
///
/// For `|ω_k - ω_j| ≤ 1` the quotient is formed as `-K_a expm1(Δ) / h` with
/// `Δ = ln K_b - ln K_a` computed without cancellation, so nearby and equal
/// frequencies need no separate expansion.
pub fn kernel_convolution(tau: f64, wj: f64, wk: f64) -> f64 {
    let (a, b) = if wj <= wk { (wj, wk) } else { (wk, wj) };
    let h = b - a;
    let ka = k_tau_unchecked(tau, a);
    if h > 1.0 {
        return (ka - k_tau_unchecked(tau, b)) / h;
    }
    if h == 0.0 {
        return (tau - k_one(a)) * ka;
    }
    // Δ from the branch of K that avoids overflow:
    // ln(1 + e^{-b}) - ln(1 + e^{-a}) = ln1p(K(1, a) (e^{-h} - 1)), and the
    // mirrored identity with K(0, a) = 1 - K(1, a) for a < 0.
    let delta = if a >= 0.0 {
        -tau * h - (k_one(a) * (-h).exp_m1()).ln_1p()
    } else {
        (1.0 - tau) * h - (k_tau_unchecked(0.0, a) * h.exp_m1()).ln_1p()
    };
    -ka * delta.exp_m1() / h
}

/// Tensor `Ĉ_ijl` mapping self-energy coefficients `σ̂` to the matrix that
/// convolves node values: `(Σ * G)(τ_i) = Σ_jl Ĉ_ijl σ̂_l g_j`.
#[derive(Clone, Debug)]
pub struct ConvTensor {
    basis: DlrBasis,
    /// Slice `l` holds the `r × r` matrix `Ĉ_{··l}`.
    slices: Vec<DMatrix<f64>>,
}

/// Matrix acting on node values: `f = Σ̄ g`.
#[derive(Clone, Debug)]
pub struct ConvMatrix {
    basis: DlrBasis,
    matrix: DMatrix<f64>,
}

impl ConvTensor {
    pub fn new(basis: &DlrBasis) -> Result<Self> {
        let r = basis.rank();
        let tau = basis.tau_nodes();
        let w = basis.omegas();
        let lu = basis.ktau_lu();
        let mut slices = Vec::with_capacity(r);
        for l in 0..r {
            // C̃_{i k l}; then Ĉ_{··l} = C̃_{··l} 𝒦⁻¹, i.e. rows solve 𝒦ᵀ x = c.
            let mut out = DMatrix::zeros(r, r);
            for i in 0..r {
                let row: Vec<f64> = (0..r).map(|k| kernel_convolution(tau[i], w[k], w[l])).collect();
                let x = lu.solve_transpose(&row)?;
                for (j, v) in x.into_iter().enumerate() {
                    out[(i, j)] = v;
                }
            }
            slices.push(out);
        }
        if slices.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("convolution tensor".into()));
        }
        Ok(Self { basis: basis.clone(), slices })
    }

    pub fn basis(&self) -> &DlrBasis {
        &self.basis
    }

    /// Entry `Ĉ_ijl`.
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.slices[l][(i, j)]
    }

    /// `Σ̄_ij = Σ_l Ĉ_ijl σ̂_l`.
    pub fn conv_matrix(&self, sigma_coeffs: &[f64]) -> Result<ConvMatrix> {
        let r = self.basis.rank();
        if sigma_coeffs.len() != r {
            return Err(Error::LengthMismatch { expected: r, got: sigma_coeffs.len() });
        }
        let mut m = DMatrix::zeros(r, r);
        for (s, &c) in self.slices.iter().zip(sigma_coeffs) {
            if c != 0.0 {
                m += s * c;
            }
        }
        Ok(ConvMatrix { basis: self.basis.clone(), matrix: m })
    }

    /// Convolution matrix of an expansion on the same basis.
    pub fn conv_matrix_of(&self, sigma: &DlrExpansion) -> Result<ConvMatrix> {
        self.check_basis(sigma)?;
        self.conv_matrix(sigma.coeffs())
    }

    /// `Σ * G` as an expansion.
    pub fn convolve(&self, sigma: &DlrExpansion, g: &DlrExpansion) -> Result<DlrExpansion> {
        self.check_basis(g)?;
        let f = self.conv_matrix_of(sigma)?.apply(&g.tau_values())?;
        DlrExpansion::fit_tau(&self.basis, &f)
    }

    fn check_basis(&self, e: &DlrExpansion) -> Result<()> {
        if e.basis().omegas() != self.basis.omegas() || e.basis().tau_nodes() != self.basis.tau_nodes() {
            return Err(Error::Incompatible("expansion lives on a different basis".into()));
        }
        Ok(())
    }
}

impl ConvMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> &DlrBasis {
        &self.basis
    }

    /// `f = Σ̄ g` for node values `g`.
    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.matrix.ncols() {
            return Err(Error::LengthMismatch { expected: self.matrix.ncols(), got: g.len() });
        }
        Ok(matvec(&self.matrix, g))
    }
}

/// Solves `(I - Ḡ₀ Σ̄) g = g₀` at the imaginary-time nodes and returns the
/// fitted `G`.
pub fn dyson_tau(tensor: &ConvTensor, g0_coeffs: &[f64], sigma_coeffs: &[f64]) -> Result<DlrExpansion> {
    let basis = tensor.basis();
    let r = basis.rank();
    let g0m = tensor.conv_matrix(g0_coeffs)?;
    let sm = tensor.conv_matrix(sigma_coeffs)?;
    let g0 = matvec(basis.ktau(), g0_coeffs);
    let a = DMatrix::identity(r, r) - g0m.matrix() * sm.matrix();
    let lu = Lu::factor(&a)?;
    let mut g = lu.solve(&g0)?;
    let resid = |g: &[f64]| -> Vec<f64> { matvec(&a, g).iter().zip(&g0).map(|(x, y)| y - x).collect() };
    let res = resid(&g);
    if vec_norm(&res) > 1e-15 * vec_norm(&g0) {
        let dx = lu.solve(&res)?;
        g.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    }
    let rel = vec_norm(&resid(&g)) / vec_norm(&g0).max(f64::MIN_POSITIVE);
    if !(rel <= 1e-12) {
        return Err(Error::NoConvergence(format!("Dyson solve residual {rel:.3e}")));
    }
    DlrExpansion::fit_tau(basis, &g)
}

/// Solves `G = 1 / (G₀⁻¹ - Σ)` at the Matsubara nodes and fits the result.
pub fn dyson_matsubara<F: Fn(i64) -> Complex64>(
    basis: &DlrBasis,
    g0_inverse: F,
    sigma: &DlrExpansion,
) -> Result<DlrExpansion> {
    let nodes = basis.matsu_nodes()?;
    let mut vals = Vec::with_capacity(nodes.len());
    for &n in nodes {
        let den = g0_inverse(n) - sigma.eval_matsubara(n);
        if den == Complex64::new(0.0, 0.0) || !den.is_finite() {
            return Err(Error::VanishingDenominator(n));
        }
        vals.push(den.inv());
    }
    DlrExpansion::fit_matsubara(basis, &vals)
}
