//! Self-consistent solution of the SYK equations
//!
//! ```text
//! G⁻¹(iν_n) = iν_n - μ - Σ(iν_n),   Σ(τ) = J² G(τ)² G(β - τ)
//! ```
//!
//! in a DLR basis, with `G(iν_n) = ∫ G(τ) e^{iν_n τ} dτ`. The sign of `μ` is
//! chosen so that the charge `Q = (G(β) - G(0))/2` is positive for `μ > 0`.
//! Internally everything is dimensionless: `τ̂ = τ/β`, `Ĵ = βJ`, `μ̂ = βμ`,
//! so that `Σ̂(τ̂) = Ĵ² G(τ̂)² G(1 - τ̂)` and `G₀(τ̂) = -K(τ̂, μ̂)`. Values of
//! `G(τ)` are the same in both unit systems.

mod richardson;

pub use richardson::Richardson;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dlr::{BasisSpec, DlrBasis, DlrExpansion};
use crate::error::{Error, Result};
use crate::imtime::{dyson_matsubara, ConvTensor};
use crate::kernel::{k_tau_unchecked, matsubara_freq};
use crate::lowrank::{matvec, Lu};

/// How the Dyson equation is solved inside the fixed-point loop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DysonMethod {
    #[default]
    ImaginaryTime,
    Matsubara,
}

impl std::str::FromStr for DysonMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imaginary_time" | "tau" => Ok(Self::ImaginaryTime),
            "matsubara" => Ok(Self::Matsubara),
            other => Err(Error::Domain(format!("unknown Dyson method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SykParams {
    pub beta: f64,
    pub j: f64,
    pub mu: f64,
    /// `Λ / β`.
    pub lambda_factor: f64,
    pub eps: f64,
    /// Mixing weight of the newest iterate.
    pub w: f64,
    pub eps_fp: f64,
    pub max_iter: usize,
    pub method: DysonMethod,
    /// Number of steps in the chemical-potential continuation `μ_j = jμ/n`.
    pub continuation_steps: usize,
}

/// Largest continuation step count tried before giving up.
pub const MAX_CONTINUATION_STEPS: usize = 16;
/// Number of times the mixing weight may be halved after divergence.
pub const MAX_MIXING_HALVINGS: usize = 8;

impl SykParams {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            j: 1.0,
            mu: 0.0,
            lambda_factor: 5.0,
            eps: 1e-14,
            w: 0.15,
            eps_fp: 1e-12,
            max_iter: 20_000,
            method: DysonMethod::ImaginaryTime,
            continuation_steps: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {} must be positive", self.beta)));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(Error::Domain(format!("mixing weight w = {} must lie in (0, 1]", self.w)));
        }
        if !(self.eps_fp > 0.0) {
            return Err(Error::Domain(format!("eps_fp = {} must be positive", self.eps_fp)));
        }
        if !(self.j.is_finite() && self.mu.is_finite()) {
            return Err(Error::Domain("J and mu must be finite".into()));
        }
        if !(self.lambda_factor > 0.0) {
            return Err(Error::Domain(format!("lambda_factor = {} must be positive", self.lambda_factor)));
        }
        if self.continuation_steps == 0 || self.max_iter == 0 {
            return Err(Error::Domain("continuation_steps and max_iter must be positive".into()));
        }
        self.basis_spec().map(|_| ())
    }

    pub fn basis_spec(&self) -> Result<BasisSpec> {
        BasisSpec::new((self.lambda_factor * self.beta).max(1.0), self.eps)
    }

    pub fn j_hat(&self) -> f64 {
        self.beta * self.j
    }

    pub fn mu_hat(&self) -> f64 {
        self.beta * self.mu
    }
}

#[derive(Clone, Debug)]
pub struct SykSolution {
    /// Dimensionless `G(τ̂)`.
    pub expansion: DlrExpansion,
    pub iterations: usize,
    pub converged: bool,
    /// Maximum node-value change per iteration of the final solve.
    pub residual_history: Vec<f64>,
    /// Mixing weight actually used in the final solve.
    pub w: f64,
    /// Chemical potential (physical units) the solution belongs to.
    pub mu: f64,
    pub beta: f64,
}

/// `σ_k = Ĵ² G(τ_k)² G(1 - τ_k)` at the imaginary-time nodes.
pub fn syk_sigma(g: &DlrExpansion, j_hat: f64) -> Vec<f64> {
    let j2 = j_hat * j_hat;
    g.basis()
        .tau_nodes()
        .iter()
        .map(|&t| {
            let a = g.eval_tau(t);
            j2 * a * a * g.eval_tau(1.0 - t)
        })
        .collect()
}

/// Conformal solution `G_c(τ̂) = -π^{1/4} / √(2Ĵ) · sin(πτ̂)^{-1/2}`.
pub fn conformal_g(tau_hat: f64, j_hat: f64) -> f64 {
    -PI.powf(0.25) / (2.0 * j_hat).sqrt() / (PI * tau_hat).sin().sqrt()
}

/// Charge `Q = (G(1) - G(0)) / 2`.
pub fn charge(solution: &SykSolution) -> f64 {
    0.5 * (solution.expansion.eval_tau(1.0) - solution.expansion.eval_tau(0.0))
}

/// Basis and cached operators for repeated solves at one `β`.
#[derive(Clone, Debug)]
pub struct SykSolver {
    params: SykParams,
    basis: DlrBasis,
    tensor: Option<ConvTensor>,
}

enum Outcome {
    Converged(Vec<f64>, Vec<f64>),
    Stalled(Vec<f64>, Vec<f64>),
    Diverged,
}

impl SykSolver {
    pub fn new(params: SykParams) -> Result<Self> {
        params.validate()?;
        let basis = DlrBasis::build(params.basis_spec()?)?;
        let tensor = match params.method {
            DysonMethod::ImaginaryTime => Some(ConvTensor::new(&basis)?),
            DysonMethod::Matsubara => {
                basis.matsu_nodes()?;
                None
            }
        };
        Ok(Self { params, basis, tensor })
    }

    pub fn basis(&self) -> &DlrBasis {
        &self.basis
    }

    pub fn params(&self) -> &SykParams {
        &self.params
    }

    /// One Dyson solve: node values of `G` for self-energy node values `sigma`.
    fn dyson(&self, mu_hat: f64, g0: &G0, sigma: &[f64]) -> Result<Vec<f64>> {
        let s = DlrExpansion::fit_tau(&self.basis, sigma)?;
        match &self.tensor {
            Some(t) => {
                let sm = t.conv_matrix(s.coeffs())?;
                let r = self.basis.rank();
                let a = nalgebra::DMatrix::identity(r, r) - g0.conv.as_ref().expect("tensor path") * sm.matrix();
                let lu = Lu::factor(&a)?;
                let mut g = lu.solve(&g0.nodes)?;
                let res: Vec<f64> = matvec(&a, &g).iter().zip(&g0.nodes).map(|(x, y)| y - x).collect();
                let dx = lu.solve(&res)?;
                g.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
                Ok(g)
            }
            None => {
                let g = dyson_matsubara(&self.basis, |n| Complex64::new(-mu_hat, matsubara_freq(n)), &s)?;
                Ok(g.tau_values())
            }
        }
    }

    fn free_g0(&self, mu_hat: f64) -> Result<G0> {
        let nodes: Vec<f64> = self.basis.tau_nodes().iter().map(|&t| -k_tau_unchecked(t, mu_hat)).collect();
        let conv = match &self.tensor {
            Some(t) => {
                let c = DlrExpansion::fit_tau(&self.basis, &nodes)?;
                Some(t.conv_matrix(c.coeffs())?.matrix().clone())
            }
            None => None,
        };
        Ok(G0 { nodes, conv })
    }

    fn fixed_point(&self, mu_hat: f64, init: &[f64], w: f64) -> Result<Outcome> {
        let p = &self.params;
        let j_hat = p.j_hat();
        let g0 = self.free_g0(mu_hat)?;
        // x holds the mixed argument of Σ[·]; each step maps it to the Dyson
        // output y and replaces it by w·y + (1-w)·x.
        let mut x = init.to_vec();
        let mut history = Vec::new();
        for _ in 0..p.max_iter {
            let gx = DlrExpansion::fit_tau(&self.basis, &x)?;
            let sigma = syk_sigma(&gx, j_hat);
            let y = match self.dyson(mu_hat, &g0, &sigma) {
                Ok(v) => v,
                Err(Error::Singular(_)) | Err(Error::VanishingDenominator(_)) | Err(Error::NonFinite(_)) => {
                    return Ok(Outcome::Diverged)
                }
                Err(e) => return Err(e),
            };
            // Physical solutions satisfy -1 ≤ G ≤ 0.
            if y.iter().any(|v| !v.is_finite() || *v > 1e-6 || *v < -1.0 - 1e-6) {
                return Ok(Outcome::Diverged);
            }
            let diff = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            history.push(diff);
            if diff <= p.eps_fp {
                return Ok(Outcome::Converged(y, history));
            }
            x.iter_mut().zip(&y).for_each(|(a, b)| *a = w * b + (1.0 - w) * *a);
        }
        let cur = x;
        Ok(Outcome::Stalled(cur, history))
    }

    /// Fixed-point solve at chemical potential `mu` (physical) from node
    /// values `init`, halving the mixing weight on divergence.
    fn solve_single(&self, mu: f64, init: &[f64]) -> Result<SykSolution> {
        let mut w = self.params.w;
        for _ in 0..=MAX_MIXING_HALVINGS {
            match self.fixed_point(self.params.beta * mu, init, w)? {
                Outcome::Converged(g, h) | Outcome::Stalled(g, h) => {
                    let converged = h.last().is_some_and(|&d| d <= self.params.eps_fp);
                    return Ok(SykSolution {
                        expansion: DlrExpansion::fit_tau(&self.basis, &g)?,
                        iterations: h.len(),
                        converged,
                        residual_history: h,
                        w,
                        mu,
                        beta: self.params.beta,
                    });
                }
                Outcome::Diverged => {
                    log::warn!("SYK iteration diverged at w = {w}; halving");
                    w *= 0.5;
                }
            }
        }
        Err(Error::NoConvergence(format!("SYK iteration diverges even at w = {w}")))
    }

    /// Solves at chemical potential `mu` (physical units). Without an initial
    /// guess, starts from `G = -1/2` at `μ = 0` and continues in `μ`, doubling
    /// the number of continuation steps when a solve fails to converge.
    pub fn solve_mu(&self, mu: f64, init: Option<&DlrExpansion>) -> Result<SykSolution> {
        if let Some(g) = init {
            if g.basis().omegas() != self.basis.omegas() {
                return Err(Error::Incompatible("initial guess lives on a different basis".into()));
            }
            return self.solve_single(mu, &g.tau_values());
        }
        let half = vec![-0.5; self.basis.rank()];
        let start = self.solve_single(0.0, &half)?;
        if mu == 0.0 || !start.converged {
            return Ok(start);
        }
        let mut steps = self.params.continuation_steps;
        loop {
            let mut sol = start.clone();
            let mut total = start.iterations;
            for j in 1..=steps {
                let m = mu * j as f64 / steps as f64;
                sol = self.solve_single(m, &sol.expansion.tau_values())?;
                total += sol.iterations;
                if !sol.converged {
                    break;
                }
            }
            if sol.converged || steps >= MAX_CONTINUATION_STEPS {
                sol.iterations = total;
                return Ok(sol);
            }
            steps *= 2;
            log::info!("continuation in mu failed; retrying with {steps} steps");
        }
    }

    pub fn solve(&self, init: Option<&DlrExpansion>) -> Result<SykSolution> {
        self.solve_mu(self.params.mu, init)
    }
}

struct G0 {
    nodes: Vec<f64>,
    conv: Option<nalgebra::DMatrix<f64>>,
}

/// Builds a basis for `params` and solves.
pub fn solve(params: SykParams, init: Option<&DlrExpansion>) -> Result<SykSolution> {
    SykSolver::new(params)?.solve(init)
}

/// Compressibility protocol at one temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaConfig {
    /// Largest chemical potential; the sequence is `μ_j = μ₀ / 2^j`.
    pub mu0: f64,
    /// Number of `μ` values `n`.
    pub levels: usize,
    /// Extrapolation model in `μ`.
    pub mu_richardson: Richardson,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self { mu0: 0.04, levels: 4, mu_richardson: Richardson { ratio: 2.0, p0: 2.0, step: 2.0 } }
    }
}

/// Result of the `μ → 0⁺` extrapolation at one `β`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaPoint {
    pub beta: f64,
    pub rank: usize,
    pub mus: Vec<f64>,
    /// `Q(β, μ_j) / μ_j`.
    pub ratios: Vec<f64>,
    pub tableau: Vec<Vec<f64>>,
    pub kappa: f64,
}

/// `K(T) = lim_{μ→0⁺} Q(β, μ)/μ` by Richardson extrapolation over
/// `μ_j = μ₀/2^j`, `j = 1..=levels`. Every inner solve must converge.
pub fn compressibility_with(params: SykParams, config: &KappaConfig) -> Result<KappaPoint> {
    if config.levels < 2 {
        return Err(Error::Domain(format!("need at least 2 levels, got {}", config.levels)));
    }
    if !(config.mu0 > 0.0) {
        return Err(Error::Domain(format!("mu0 = {} must be positive", config.mu0)));
    }
    let solver = SykSolver::new(SykParams { mu: 0.0, ..params })?;
    let base = solver.solve_mu(0.0, None)?;
    if !base.converged {
        return Err(Error::NoConvergence(format!("SYK solve at beta = {}, mu = 0", params.beta)));
    }
    let mus: Vec<f64> = (1..=config.levels).map(|j| config.mu0 / 2f64.powi(j as i32)).collect();
    let mut ratios = Vec::with_capacity(mus.len());
    for &mu in &mus {
        let mut sol = solver.solve_mu(mu, Some(&base.expansion))?;
        if !sol.converged {
            sol = solver.solve_mu(mu, None)?;
        }
        if !sol.converged {
            return Err(Error::NoConvergence(format!("SYK solve at beta = {}, mu = {mu}", params.beta)));
        }
        ratios.push(charge(&sol) / mu);
    }
    let tableau = config.mu_richardson.tableau(&ratios);
    let kappa = config.mu_richardson.limit(&ratios)?;
    Ok(KappaPoint { beta: params.beta, rank: solver.basis().rank(), mus, ratios, tableau, kappa })
}

/// [`compressibility_with`] using `levels` values below `mu0` and the
/// default extrapolation model.
pub fn compressibility(params: SykParams, mu0: f64, levels: usize) -> Result<f64> {
    let config = KappaConfig { mu0, levels, ..KappaConfig::default() };
    Ok(compressibility_with(params, &config)?.kappa)
}

/// Richardson limit `T → 0` of `K(T)` sampled at `β` doubling.
pub fn k_zero(betas: &[f64], ks: &[f64], model: &Richardson) -> Result<f64> {
    Ok(*k_zero_tableau(betas, ks, model)?.last().and_then(|r| r.last()).expect("non-empty"))
}

/// Extrapolation tableau for [`k_zero`].
pub fn k_zero_tableau(betas: &[f64], ks: &[f64], model: &Richardson) -> Result<Vec<Vec<f64>>> {
    if betas.len() != ks.len() {
        return Err(Error::LengthMismatch { expected: betas.len(), got: ks.len() });
    }
    if betas.is_empty() {
        return Err(Error::Domain("no temperatures given".into()));
    }
    for w in betas.windows(2) {
        if ((w[1] / w[0]) - model.ratio).abs() > 1e-12 * model.ratio {
            return Err(Error::Domain(format!("betas must grow by a factor {}", model.ratio)));
        }
    }
    Ok(model.tableau(ks))
}

/// Runs [`compressibility_with`] for every `β` in parallel.
pub fn kappa_sweep(params: SykParams, betas: &[f64], config: &KappaConfig) -> Vec<Result<KappaPoint>> {
    betas.par_iter().map(|&beta| compressibility_with(SykParams { beta, ..params }, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_solution_is_fixed_point() {
        let mut p = SykParams::new(20.0);
        p.j = 0.0;
        let s = solve(p, None).unwrap();
        assert!(s.converged);
        assert_eq!(s.iterations, 1);
        assert!(s.expansion.tau_values().iter().all(|v| (v + 0.5).abs() < 1e-13));
    }

    #[test]
    fn sigma_of_constant() {
        let b = DlrBasis::build(BasisSpec::new(20.0, 1e-12).unwrap()).unwrap();
        let g = DlrExpansion::fit_tau(&b, &vec![-0.5; b.rank()]).unwrap();
        let s = syk_sigma(&g, 3.0);
        assert!(s.iter().all(|v| (v + 9.0 / 8.0).abs() < 1e-12));
    }

    #[test]
    fn validation() {
        let mut p = SykParams::new(10.0);
        p.w = 0.0;
        assert!(p.validate().is_err());
        p.w = 1.5;
        assert!(p.validate().is_err());
        assert!(SykParams::new(-1.0).validate().is_err());
        assert!("matsubara".parse::<DysonMethod>().is_ok());
        assert!("other".parse::<DysonMethod>().is_err());
    }

    #[test]
    fn small_beta_methods_agree() {
        let p = SykParams::new(10.0);
        let a = solve(p, None).unwrap();
        let b = solve(SykParams { method: DysonMethod::Matsubara, ..p }, None).unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.expansion.tau_values().iter().zip(b.expansion.tau_values()) {
            assert!((x - y).abs() < 1e-11);
        }
        assert!(charge(&a).abs() < 1e-10);
    }

    #[test]
    fn k_zero_validates_ratio() {
        let r = Richardson::default();
        assert!(k_zero(&[50.0, 100.0], &[1.0], &r).is_err());
        assert!(k_zero(&[50.0, 120.0], &[1.0, 1.0], &r).is_err());
        let ks: Vec<f64> = [50.0, 100.0, 200.0].iter().map(|b| 1.04 + 0.3 / b).collect();
        assert!((k_zero(&[50.0, 100.0, 200.0], &ks, &r).unwrap() - 1.04).abs() < 1e-13);
    }
}
