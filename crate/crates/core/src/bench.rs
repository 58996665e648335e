//! Reference Green's functions and accuracy sweeps.
//!
//! Each test case is a spectral density on `[-1, 1]` (physical units) at
//! inverse temperature `β`. Reference values of the dimensionless
//! `G(τ) = -∫ K(τ, βω) ρ(ω) dω` come from closed forms or from adaptive
//! Gauss–Kronrod quadrature, never from the representations under test.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

use crate::dlr::{BasisSpec, DlrBasis, DlrExpansion};
use crate::error::{Error, Result};
use crate::grids::{dense_test_points, tau_fine_grid};
use crate::kernel::{k_matsubara, k_tau_unchecked, matsubara_freq};
use crate::quadrature::adaptive_gk15_breaks;

/// Absolute tolerance of the reference quadratures.
pub const REFERENCE_TOL: f64 = 1e-15;

/// Spectral densities with independent reference values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// `ρ(ω) = √(1 - ω²)` on `[-1, 1]`.
    Semicircle,
    /// `ρ(ω) = δ(ω + 1/3) + δ(ω - 1)`.
    TwoPole,
    /// Bosonic `ρ_B(ω) = ω √(1 - ω²)` with kernel `e^{-ωτ}/(1 - e^{-ω})`,
    /// represented through the regularized fermionic density
    /// `ρ̃(ω) = coth(βω/2) ρ_B(ω)`.
    Bosonic,
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semicircle" => Ok(Case::Semicircle),
            "two_pole" | "two-pole" => Ok(Case::TwoPole),
            "bosonic" => Ok(Case::Bosonic),
            _ => Err(Error::Domain(format!("unknown case '{s}' (semicircle, two_pole, bosonic)"))),
        }
    }
}

/// How the expansion coefficients are recovered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Tau,
    Matsubara,
}

impl FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" | "imaginary_time" => Ok(Sampling::Tau),
            "matsubara" => Ok(Sampling::Matsubara),
            _ => Err(Error::Domain(format!("unknown sampling domain '{s}' (tau, matsubara)"))),
        }
    }
}

/// A test case at a fixed inverse temperature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestFunction {
    pub case: Case,
    pub beta: f64,
}

/// `x e^{-xτ} / (1 - e^{-x})`, finite at `x = 0`.
fn x_bosonic_kernel(tau: f64, x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x > 0.0 {
        x * (-x * tau).exp() / -(-x).exp_m1()
    } else {
        x * (x * (1.0 - tau)).exp() / x.exp_m1()
    }
}

impl TestFunction {
    pub fn new(case: Case, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        Ok(Self { case, beta })
    }

    /// Breakpoints in `ω ∈ [0, 1]` resolving the scale `1/β` of the kernel.
    fn omega_breaks(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        let mut x = 1.0 / self.beta;
        while x < 0.5 {
            b.push(x);
            x *= 4.0;
        }
        b.push(0.5);
        b
    }

    /// `∫₀¹ f(ω) √(1 - ω²) dω`, with `ω = 1 - s²` on `[1/2, 1]` to remove
    /// the square-root endpoint.
    fn half_semicircle<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        let near = adaptive_gk15_breaks(|w| f(w) * (1.0 - w * w).sqrt(), &self.omega_breaks(), 0.5 * tol).value;
        let s_max = 0.5f64.sqrt();
        let edge = adaptive_gk15_breaks(
            |s| {
                let w = (1.0 - s) * (1.0 + s);
                f(w) * s * (2.0 - s * s).sqrt() * 2.0 * s
            },
            &[0.0, 0.25 * s_max, s_max],
            0.5 * tol,
        )
        .value;
        near + edge
    }

    /// Reference `G(τ)` for dimensionless `τ ∈ [0, 1]`.
    pub fn tau(&self, tau: f64) -> f64 {
        let b = self.beta;
        match self.case {
            Case::Semicircle => {
                -(self.half_semicircle(|w| k_tau_unchecked(tau, b * w), REFERENCE_TOL)
                    + self.half_semicircle(|w| k_tau_unchecked(tau, -b * w), REFERENCE_TOL))
            }
            Case::TwoPole => -k_tau_unchecked(tau, -b / 3.0) - k_tau_unchecked(tau, b),
            Case::Bosonic => {
                // ρ_B is odd, so ∫ K_B ρ_B = ∫₀¹ [x K_B(τ, x) - (-x) K_B(τ, -x)] √(1-ω²) dω / β
                // with x = βω.
                let f = |w: f64| (x_bosonic_kernel(tau, b * w) + x_bosonic_kernel(tau, -b * w)) / b;
                -self.half_semicircle(f, REFERENCE_TOL)
            }
        }
    }

    /// Reference `G(iν_n)` in dimensionless units.
    pub fn matsubara(&self, n: i64) -> Result<Complex64> {
        let b = self.beta;
        match self.case {
            Case::Semicircle => {
                // G(iν) = (π/β)(z - √(z² - 1)) at z = iν/β.
                let y = matsubara_freq(n) / b;
                let im = -y.signum() / (y.abs() + (1.0 + y * y).sqrt());
                Ok(Complex64::new(0.0, PI / b * im))
            }
            Case::TwoPole => Ok(-k_matsubara(n, -b / 3.0) - k_matsubara(n, b)),
            Case::Bosonic => Err(Error::Domain("bosonic Matsubara values are not provided".into())),
        }
    }

    /// `‖ρ‖₁` of the density represented with the fermionic kernel.
    pub fn rho_l1(&self) -> f64 {
        match self.case {
            Case::Semicircle => PI / 2.0,
            Case::TwoPole => 2.0,
            Case::Bosonic => {
                let b = self.beta;
                let coth_w = |w: f64| {
                    if w == 0.0 {
                        2.0 / b
                    } else {
                        w / (0.5 * b * w).tanh()
                    }
                };
                2.0 * self.half_semicircle(coth_w, REFERENCE_TOL)
            }
        }
    }

    /// Dense evaluation points on `[0, 1]`, refined toward both ends on the
    /// scale `1/β`.
    pub fn test_points(&self) -> Result<Vec<f64>> {
        Ok(dense_test_points(&tau_fine_grid(self.beta.max(1.0), 24)?, 2))
    }
}

/// Reference values at a fixed set of points, shared between sweep cells.
#[derive(Clone, Debug)]
pub struct Reference {
    pub function: TestFunction,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl Reference {
    pub fn new(function: TestFunction) -> Result<Self> {
        let points = function.test_points()?;
        let values = points.par_iter().map(|&t| function.tau(t)).collect();
        Ok(Self { function, points, values })
    }

    /// Largest deviation of `g` from the reference values.
    pub fn sup_error(&self, g: &DlrExpansion) -> f64 {
        self.points.iter().zip(&self.values).map(|(&t, v)| (g.eval_tau(t) - v).abs()).fold(0.0, f64::max)
    }
}

/// One cell of an accuracy sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub lambda: f64,
    pub eps: f64,
    pub rank: usize,
    pub error: f64,
}

/// Fits the test function on `basis` from samples in the given domain.
pub fn fit(function: &TestFunction, basis: &DlrBasis, sampling: Sampling) -> Result<DlrExpansion> {
    match sampling {
        Sampling::Tau => {
            let vals: Vec<f64> = basis.tau_nodes().iter().map(|&t| function.tau(t)).collect();
            DlrExpansion::fit_tau(basis, &vals)
        }
        Sampling::Matsubara => {
            let vals = basis.matsu_nodes()?.iter().map(|&n| function.matsubara(n)).collect::<Result<Vec<_>>>()?;
            DlrExpansion::fit_matsubara(basis, &vals)
        }
    }
}

/// Builds the basis for one `(Λ, ε)` cell and measures the fit error.
pub fn bench_point(reference: &Reference, lambda: f64, eps: f64, sampling: Sampling) -> Result<BenchPoint> {
    let spec = BasisSpec::new(lambda, eps)?;
    let basis = DlrBasis::build(spec)?;
    let g = fit(&reference.function, &basis, sampling)?;
    Ok(BenchPoint { lambda, eps, rank: basis.rank(), error: reference.sup_error(&g) })
}

/// All `(Λ, ε)` cells, computed in parallel; results are ordered by `ε`
/// then `Λ`.
pub fn sweep(function: TestFunction, eps: &[f64], lambdas: &[f64], sampling: Sampling) -> Result<Vec<BenchPoint>> {
    let reference = Reference::new(function)?;
    let cells: Vec<(f64, f64)> = eps.iter().flat_map(|&e| lambdas.iter().map(move |&l| (e, l))).collect();
    cells.par_iter().map(|&(e, l)| bench_point(&reference, l, e, sampling)).collect()
}
