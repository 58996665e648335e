//! Discrete Lehmann representation: basis construction, fitting and
//! evaluation.
//!
//! A basis for cutoff `Λ` and accuracy `ε` consists of `r` real frequencies
//! `ω_l`, `r` imaginary-time nodes `τ_k` and `r` Matsubara indices `n_k`.
//! A Green's function is represented as
//!
//! ```text
//! G(τ) = Σ_l ĝ_l K(τ, ω_l)
//! ```
//!
//! with coefficients obtained by interpolation at either node set.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grids::{omega_fine_grid, tau_fine_grid, FineGrid};
use crate::kernel::{k_matsubara, k_tau_unchecked, PhysicalScale};
use crate::lowrank::{matvec, pivoted_qr, pivoted_qr_rank, vec_norm, Lu};

/// Matsubara indices with `|n|` up to this bound are all candidates for node
/// selection; beyond it candidates are spaced geometrically.
const DENSE_MATSUBARA: i64 = 1 << 14;
/// Geometric candidates per octave beyond [`DENSE_MATSUBARA`].
const MATSUBARA_PER_OCTAVE: f64 = 64.0;

/// Relative size of `Im ĝ` accepted outright by [`DlrExpansion::fit_matsubara`].
pub const IMAG_TOLERANCE: f64 = 1e-6;
/// Relative residual of `Re ĝ` on the stacked real system below which the
/// real part is accepted without a separate least-squares solve; raised to
/// `10ε` of the basis when that is larger.
pub const REAL_RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Relative least-squares residual above which Matsubara samples are
/// rejected as inconsistent with a real spectral representation.
pub const CONJUGATION_TOLERANCE: f64 = 0.1;

/// Parameters of a DLR basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// Dimensionless cutoff `Λ = β ω_max`.
    pub lambda: f64,
    /// Relative accuracy target.
    pub eps: f64,
    /// Chebyshev degree per panel of the fine grids.
    pub p: usize,
    /// Largest Matsubara index considered for node selection.
    pub n_max: i64,
}

impl BasisSpec {
    /// Spec with `p = 24` and `n_max = ⌈Λ⌉`.
    pub fn new(lambda: f64, eps: f64) -> Result<Self> {
        let n_max = if lambda.is_finite() && lambda >= 1.0 { lambda.ceil() as i64 } else { 1 };
        let spec = Self { lambda, eps, p: 24, n_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_p(mut self, p: usize) -> Result<Self> {
        self.p = p;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n_max(mut self, n_max: i64) -> Result<Self> {
        self.n_max = n_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda = {} must be at least 1", self.lambda)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Domain(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        if self.p < 4 {
            return Err(Error::Domain(format!("p = {} must be at least 4", self.p)));
        }
        if self.n_max < 1 {
            return Err(Error::Domain(format!("n_max = {} must be at least 1", self.n_max)));
        }
        Ok(())
    }
}

/// Matsubara nodes and the factorized interpolation matrix.
#[derive(Debug)]
struct MatsubaraPart {
    nodes: Vec<i64>,
    kmat: DMatrix<Complex64>,
    lu: Lu<Complex64>,
}

#[derive(Debug)]
struct Inner {
    spec: BasisSpec,
    omegas: Vec<f64>,
    tau_nodes: Vec<f64>,
    ktau: DMatrix<f64>,
    ktau_lu: Lu<f64>,
    matsubara: OnceLock<MatsubaraPart>,
}

/// A built DLR basis. Cloning is cheap; clones share the same data.
#[derive(Clone, Debug)]
pub struct DlrBasis {
    inner: Arc<Inner>,
}

/// Serialized form of a basis. Matrices are rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisRecord {
    pub lambda: f64,
    pub eps: f64,
    pub p: usize,
    pub n_max: i64,
    pub r: usize,
    pub omegas: Vec<f64>,
    pub tau_nodes: Vec<f64>,
    pub matsu_nodes: Vec<i64>,
}

/// Fine-grid kernel matrix `A_ij = K(τ_i, ω_j)`.
pub fn fine_kernel_matrix(tau: &FineGrid, omega: &FineGrid) -> DMatrix<f64> {
    DMatrix::from_fn(tau.len(), omega.len(), |i, j| k_tau_unchecked(tau.nodes[i], omega.nodes[j]))
}

/// Candidate Matsubara indices in `[-n_max, n_max]`: all of them up to
/// `|n| = 2^14`, geometrically spaced beyond.
pub fn matsubara_candidates(n_max: i64) -> Vec<i64> {
    let dense = n_max.min(DENSE_MATSUBARA);
    let mut pos: Vec<i64> = (0..=dense).collect();
    if n_max > dense {
        let ratio = 2f64.powf(1.0 / MATSUBARA_PER_OCTAVE);
        let mut x = dense as f64;
        loop {
            x *= ratio;
            let n = (x.round() as i64).min(n_max);
            if n > *pos.last().unwrap() {
                pos.push(n);
            }
            if n == n_max {
                break;
            }
        }
    }
    let mut all: Vec<i64> = pos.iter().skip(1).rev().map(|&n| -n).collect();
    all.extend(pos);
    all
}

/// Selects up to `omegas.len()` Matsubara indices by pivoted QR on the rows
/// of `k_matsubara(n, ω_l)`, `n ∈ [-n_max, n_max]`. Returned sorted.
pub fn select_matsubara_nodes(omegas: &[f64], n_max: i64) -> Result<Vec<i64>> {
    let cands = matsubara_candidates(n_max);
    let r = omegas.len();
    let mt = DMatrix::from_fn(r, cands.len(), |l, i| k_matsubara(cands[i], omegas[l]));
    let qr = pivoted_qr_rank(&mt, r)?;
    let mut nodes: Vec<i64> = qr.selected().iter().map(|&i| cands[i]).collect();
    nodes.sort_unstable();
    Ok(nodes)
}

impl DlrBasis {
    /// Builds the basis: frequencies from the pivoted QR of the fine-grid
    /// kernel matrix, then imaginary-time nodes from the rows of the selected
    /// columns. Matsubara nodes are selected on first use.
    pub fn build(spec: BasisSpec) -> Result<Self> {
        spec.validate()?;
        let tg = tau_fine_grid(spec.lambda, spec.p)?;
        let wg = omega_fine_grid(spec.lambda, spec.p)?;
        let a = fine_kernel_matrix(&tg, &wg);
        let cols = pivoted_qr(&a, spec.eps)?;
        let r = cols.rank();
        let sel_w = cols.selected().to_vec();
        let bt = DMatrix::from_fn(r, tg.len(), |l, i| a[(i, sel_w[l])]);
        let rows = pivoted_qr_rank(&bt, r)?;
        if rows.rank() != r {
            return Err(Error::Singular(rows.rank()));
        }
        let mut omegas: Vec<f64> = sel_w.iter().map(|&j| wg.nodes[j]).collect();
        let mut tau_nodes: Vec<f64> = rows.selected().iter().map(|&i| tg.nodes[i]).collect();
        omegas.sort_by(f64::total_cmp);
        tau_nodes.sort_by(f64::total_cmp);
        log::debug!("dlr basis lambda={} eps={} rank={}", spec.lambda, spec.eps, r);
        Self::assemble(spec, omegas, tau_nodes, None)
    }

    fn assemble(spec: BasisSpec, omegas: Vec<f64>, tau_nodes: Vec<f64>, matsu: Option<Vec<i64>>) -> Result<Self> {
        let r = omegas.len();
        if tau_nodes.len() != r {
            return Err(Error::LengthMismatch { expected: r, got: tau_nodes.len() });
        }
        if omegas.iter().chain(&tau_nodes).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("basis nodes".into()));
        }
        if tau_nodes.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Domain("imaginary-time nodes must lie in [0, 1]".into()));
        }
        let ktau = DMatrix::from_fn(r, r, |k, l| k_tau_unchecked(tau_nodes[k], omegas[l]));
        let ktau_lu = Lu::factor(&ktau)?;
        let basis =
            Self { inner: Arc::new(Inner { spec, omegas, tau_nodes, ktau, ktau_lu, matsubara: OnceLock::new() }) };
        if let Some(nodes) = matsu {
            let part = basis.matsubara_part_from(nodes)?;
            let _ = basis.inner.matsubara.set(part);
        }
        Ok(basis)
    }

    fn matsubara_part_from(&self, nodes: Vec<i64>) -> Result<MatsubaraPart> {
        let r = self.rank();
        if nodes.len() != r {
            return Err(Error::Domain(format!(
                "only {} Matsubara nodes available for rank {r}; increase n_max",
                nodes.len()
            )));
        }
        let w = &self.inner.omegas;
        let kmat = DMatrix::from_fn(r, r, |k, l| k_matsubara(nodes[k], w[l]));
        let lu = Lu::factor(&kmat)?;
        Ok(MatsubaraPart { nodes, kmat, lu })
    }

    fn matsubara(&self) -> Result<&MatsubaraPart> {
        if let Some(m) = self.inner.matsubara.get() {
            return Ok(m);
        }
        let nodes = select_matsubara_nodes(&self.inner.omegas, self.inner.spec.n_max)?;
        let part = self.matsubara_part_from(nodes)?;
        let _ = self.inner.matsubara.set(part);
        Ok(self.inner.matsubara.get().expect("initialized above"))
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.inner.spec
    }

    pub fn rank(&self) -> usize {
        self.inner.omegas.len()
    }

    /// DLR frequencies, ascending.
    pub fn omegas(&self) -> &[f64] {
        &self.inner.omegas
    }

    /// Imaginary-time interpolation nodes in `[0, 1]`, ascending.
    pub fn tau_nodes(&self) -> &[f64] {
        &self.inner.tau_nodes
    }

    /// Matsubara interpolation indices, ascending.
    pub fn matsu_nodes(&self) -> Result<&[i64]> {
        Ok(&self.matsubara()?.nodes)
    }

    /// `𝒦_kl = K(τ_k, ω_l)`.
    pub fn ktau(&self) -> &DMatrix<f64> {
        &self.inner.ktau
    }

    pub fn ktau_lu(&self) -> &Lu<f64> {
        &self.inner.ktau_lu
    }

    /// `K_kl = 1/(ω_l - iν_{n_k})`.
    pub fn kmat(&self) -> Result<&DMatrix<Complex64>> {
        Ok(&self.matsubara()?.kmat)
    }

    pub fn kmat_lu(&self) -> Result<&Lu<Complex64>> {
        Ok(&self.matsubara()?.lu)
    }

    /// Imaginary-time nodes in physical units.
    pub fn tau_nodes_physical(&self, scale: &PhysicalScale) -> Vec<f64> {
        self.tau_nodes().iter().map(|t| t * scale.beta()).collect()
    }

    /// DLR frequencies in physical units.
    pub fn omegas_physical(&self, scale: &PhysicalScale) -> Vec<f64> {
        self.omegas().iter().map(|w| w / scale.beta()).collect()
    }

    pub fn to_record(&self) -> Result<BasisRecord> {
        let s = self.spec();
        Ok(BasisRecord {
            lambda: s.lambda,
            eps: s.eps,
            p: s.p,
            n_max: s.n_max,
            r: self.rank(),
            omegas: self.omegas().to_vec(),
            tau_nodes: self.tau_nodes().to_vec(),
            matsu_nodes: self.matsu_nodes()?.to_vec(),
        })
    }

    pub fn from_record(rec: BasisRecord) -> Result<Self> {
        let spec = BasisSpec { lambda: rec.lambda, eps: rec.eps, p: rec.p, n_max: rec.n_max };
        spec.validate()?;
        if rec.omegas.len() != rec.r {
            return Err(Error::LengthMismatch { expected: rec.r, got: rec.omegas.len() });
        }
        if rec.matsu_nodes.len() != rec.r {
            return Err(Error::LengthMismatch { expected: rec.r, got: rec.matsu_nodes.len() });
        }
        Self::assemble(spec, rec.omegas, rec.tau_nodes, Some(rec.matsu_nodes))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record()?)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(s)?)
    }

    /// SHA-256 of the compact JSON record, hex encoded.
    pub fn basis_hash(&self) -> Result<String> {
        let rec = serde_json::to_vec(&self.to_record()?)?;
        Ok(hex::encode(Sha256::digest(&rec)))
    }

    /// Whether doubling `n_max` leaves the selected Matsubara nodes unchanged.
    pub fn matsubara_node_convergence(&self) -> Result<bool> {
        let n_max = self.spec().n_max;
        let a = select_matsubara_nodes(self.omegas(), n_max)?;
        if a.len() < self.rank() {
            return Ok(false);
        }
        let b = select_matsubara_nodes(self.omegas(), 2 * n_max)?;
        Ok(a == b)
    }
}

/// Builds the basis for `spec` and reports whether its Matsubara nodes are
/// stable under doubling of `n_max`.
pub fn matsubara_node_convergence(spec: BasisSpec) -> Result<bool> {
    DlrBasis::build(spec)?.matsubara_node_convergence()
}

/// Particle statistics; only affects the extension of `G(τ)` outside `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    #[default]
    Fermionic,
    Bosonic,
}

/// `G(τ) = Σ_l ĝ_l K(τ, ω_l)` on a given basis.
#[derive(Clone, Debug)]
pub struct DlrExpansion {
    basis: DlrBasis,
    coeffs: Vec<f64>,
    statistics: Statistics,
}

#[derive(Serialize, Deserialize)]
struct ExpansionRecord {
    basis_hash: String,
    coeffs: Vec<f64>,
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl DlrExpansion {
    pub fn new(basis: &DlrBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.rank() {
            return Err(Error::LengthMismatch { expected: basis.rank(), got: coeffs.len() });
        }
        check_finite(&coeffs, "coefficients")?;
        Ok(Self { basis: basis.clone(), coeffs, statistics: Statistics::Fermionic })
    }

    pub fn zero(basis: &DlrBasis) -> Self {
        Self { basis: basis.clone(), coeffs: vec![0.0; basis.rank()], statistics: Statistics::Fermionic }
    }

    pub fn with_statistics(mut self, statistics: Statistics) -> Self {
        self.statistics = statistics;
        self
    }

    /// Interpolates samples `g_k = G(τ_k)` by solving `𝒦 ĝ = g`.
    pub fn fit_tau(basis: &DlrBasis, samples: &[f64]) -> Result<Self> {
        let r = basis.rank();
        if samples.len() != r {
            return Err(Error::LengthMismatch { expected: r, got: samples.len() });
        }
        check_finite(samples, "imaginary-time samples")?;
        let lu = basis.ktau_lu();
        let mut x = lu.solve(samples)?;
        let gnorm = vec_norm(samples);
        // Iterative refinement keeps the residual at rounding level.
        for _ in 0..2 {
            let res: Vec<f64> = matvec(basis.ktau(), &x).iter().zip(samples).map(|(a, b)| b - a).collect();
            if vec_norm(&res) <= 1e-15 * gnorm {
                break;
            }
            let dx = lu.solve(&res)?;
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        Self::new(basis, x)
    }

    /// Interpolates samples `G(iν_{n_k})` at the Matsubara nodes. The
    /// coefficients are forced to be real; a warning is logged when the
    /// samples are not consistent with that.
    pub fn fit_matsubara(basis: &DlrBasis, samples: &[Complex64]) -> Result<Self> {
        let r = basis.rank();
        if samples.len() != r {
            return Err(Error::LengthMismatch { expected: r, got: samples.len() });
        }
        if !samples.iter().all(|z| z.is_finite()) {
            return Err(Error::NonFinite("Matsubara samples".into()));
        }
        let kmat = basis.kmat()?;
        let lu = basis.kmat_lu()?;
        let mut x = lu.solve(samples)?;
        for _ in 0..2 {
            let res: Vec<Complex64> = matvec(kmat, &x).iter().zip(samples).map(|(a, b)| b - a).collect();
            if vec_norm(&res) <= 1e-15 * vec_norm(samples) {
                break;
            }
            let dx = lu.solve(&res)?;
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        }
        let xnorm = vec_norm(&x);
        let im = x.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        if im <= IMAG_TOLERANCE * xnorm {
            return Self::new(basis, re);
        }
        // At large Λ the complex system is nearly non-unique and Im ĝ can be
        // sizable even for exact data. Re ĝ is then still a least-squares
        // solution of the stacked real system as long as it reproduces the
        // samples to roundoff.
        let a = DMatrix::from_fn(2 * r, r, |i, l| if i < r { kmat[(i, l)].re } else { kmat[(i - r, l)].im });
        let b = DVector::from_fn(2 * r, |i, _| if i < r { samples[i].re } else { samples[i - r].im });
        let bnorm = b.norm().max(f64::MIN_POSITIVE);
        let rel_re = (&a * DVector::from_column_slice(&re) - &b).norm() / bnorm;
        // Samples of a function outside the span carry an ε-level residual.
        if rel_re <= REAL_RESIDUAL_TOLERANCE.max(10.0 * basis.spec().eps) {
            return Self::new(basis, re);
        }
        log::warn!(
            "Matsubara samples are not conjugate-consistent (residual {rel_re:.3e}); using a real least-squares fit"
        );
        let svd = a
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::NoConvergence("least squares".into()))?;
        let cut = 1e-15 * svd.singular_values.max();
        let sol = svd.solve(&b, cut).map_err(|e| Error::NoConvergence(e.into()))?;
        let rel = (&a * &sol - &b).norm() / bnorm;
        if rel > CONJUGATION_TOLERANCE {
            return Err(Error::Conjugation(rel));
        }
        Self::new(basis, sol.iter().copied().collect())
    }

    /// Fit from physical-unit Matsubara values `G(iν_{n_k}) = β Ĝ(iν̂_{n_k})`.
    pub fn fit_matsubara_physical(basis: &DlrBasis, samples: &[Complex64], scale: &PhysicalScale) -> Result<Self> {
        let s: Vec<Complex64> = samples.iter().map(|z| z / scale.beta()).collect();
        Self::fit_matsubara(basis, &s)
    }

    pub fn basis(&self) -> &DlrBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    /// `G(τ)` for any real `τ`, extended (anti)periodically outside `[0, 1]`.
    pub fn eval_tau(&self, tau: f64) -> f64 {
        let (t, sign) = if (0.0..=1.0).contains(&tau) {
            (tau, 1.0)
        } else {
            let k = tau.floor();
            let flip = self.statistics == Statistics::Fermionic && (k as i64).rem_euclid(2) == 1;
            (tau - k, if flip { -1.0 } else { 1.0 })
        };
        sign * self.coeffs.iter().zip(self.basis.omegas()).map(|(g, &w)| g * k_tau_unchecked(t, w)).sum::<f64>()
    }

    /// `G(iν_n) = Σ_l ĝ_l / (ω_l - iν_n)`.
    pub fn eval_matsubara(&self, n: i64) -> Complex64 {
        self.coeffs.iter().zip(self.basis.omegas()).map(|(g, &w)| g * k_matsubara(n, w)).sum()
    }

    /// Values at the imaginary-time nodes.
    pub fn tau_values(&self) -> Vec<f64> {
        matvec(self.basis.ktau(), &self.coeffs)
    }

    /// Values at the Matsubara nodes.
    pub fn matsubara_values(&self) -> Result<Vec<Complex64>> {
        let c: Vec<Complex64> = self.coeffs.iter().map(|&g| Complex64::new(g, 0.0)).collect();
        Ok(matvec(self.basis.kmat()?, &c))
    }

    /// `G(τ)` at physical time `τ ∈ [0, β]`.
    pub fn eval_tau_physical(&self, tau: f64, scale: &PhysicalScale) -> f64 {
        self.eval_tau(scale.to_dimensionless_tau(tau))
    }

    /// `G(iν_n)` in physical units.
    pub fn eval_matsubara_physical(&self, n: i64, scale: &PhysicalScale) -> Complex64 {
        scale.beta() * self.eval_matsubara(n)
    }

    /// Effective spectral density `Σ_k w_k δ(ω - ω_k)` with `w_k = -ĝ_k`,
    /// as `(ω_k, w_k)` pairs sorted by frequency.
    pub fn spectral_deltas(&self) -> Vec<(f64, f64)> {
        self.basis.omegas().iter().zip(&self.coeffs).map(|(&w, &g)| (w, -g)).collect()
    }

    /// Weights `g̃_k = ĝ_k / (1 + e^{-ω_k})` for the kernel `e^{-ωτ}`.
    pub fn tilde_weights(&self) -> Vec<f64> {
        self.basis.omegas().iter().zip(&self.coeffs).map(|(&w, &g)| g * k_tau_unchecked(0.0, w)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = ExpansionRecord { basis_hash: self.basis.basis_hash()?, coeffs: self.coeffs.clone() };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    /// Loads coefficients written by [`Self::to_json`]; the basis must match
    /// the recorded hash.
    pub fn from_json(basis: &DlrBasis, s: &str) -> Result<Self> {
        let rec: ExpansionRecord = serde_json::from_str(s)?;
        let hash = basis.basis_hash()?;
        if rec.basis_hash != hash {
            return Err(Error::Incompatible(format!("expansion basis hash {} does not match {hash}", rec.basis_hash)));
        }
        Self::new(basis, rec.coeffs)
    }
}
