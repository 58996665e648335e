//! The fermionic Lehmann kernel in dimensionless variables.
//!
//! With `τ ∈ [0, 1]` and `ω = β·ω_phys`, the kernel reads
//!
//! ```text
//! K(τ, ω) = exp(-ωτ) / (1 + exp(-ω))
//! ```
//!
//! and its Matsubara transform `∫₀¹ K(τ, ω) exp(iν_n τ) dτ = 1 / (ω - iν_n)`
//! with `ν_n = (2n + 1)π`. Physical quantities are reached through
//! [`PhysicalScale`].

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Fermionic Matsubara frequency `ν_n = (2n + 1)π` in dimensionless units.
#[inline]
pub fn matsubara_freq(n: i64) -> f64 {
    (2 * n + 1) as f64 * PI
}

/// Kernel `K(τ, ω)` with argument checks.
pub fn k_tau(tau: f64, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau = {tau} is outside [0, 1]")));
    }
    if !omega.is_finite() {
        return Err(Error::Domain(format!("omega = {omega} is not finite")));
    }
    Ok(k_tau_unchecked(tau, omega))
}

/// Exponent of the numerator of `K`, `-τω` for `ω ≥ 0` and `(1-τ)ω`
/// otherwise, as an unevaluated sum `hi + lo`. The products are formed with
/// an error-free transformation, so `exp` sees the exponent of the exact
/// inputs rather than a rounded one (the rounding error of `τω` would be
/// amplified by `|τω|`).
#[inline]
fn exponent(tau: f64, omega: f64) -> (f64, f64) {
    let h = tau * omega;
    let l = tau.mul_add(omega, -h);
    if omega >= 0.0 {
        (-h, -l)
    } else {
        // ω - h - l with a two-sum for the leading difference.
        let s = omega - h;
        let bb = s - omega;
        let e = (omega - (s - bb)) + (-h - bb);
        (s, e - l)
    }
}

/// Kernel `K(τ, ω)` without argument checks.
///
/// Uses `exp(-τω)/(1+exp(-ω))` for `ω ≥ 0` and `exp((1-τ)ω)/(1+exp(ω))`
/// otherwise, so no intermediate ever overflows.
#[inline]
pub fn k_tau_unchecked(tau: f64, omega: f64) -> f64 {
    let (hi, lo) = exponent(tau, omega);
    let num = hi.exp();
    (num + num * lo) / (1.0 + (-omega.abs()).exp())
}

/// Natural logarithm of `K(τ, ω)`; finite even where the kernel itself
/// underflows double precision.
pub fn ln_k_tau(tau: f64, omega: f64) -> Result<f64> {
    k_tau(tau, 0.0)?;
    if !omega.is_finite() {
        return Err(Error::Domain(format!("omega = {omega} is not finite")));
    }
    let (hi, lo) = exponent(tau, omega);
    Ok(hi + (lo - (-omega.abs()).exp().ln_1p()))
}

/// Matsubara kernel `1 / (ω - iν_n)`.
#[inline]
pub fn k_matsubara(n: i64, omega: f64) -> Complex64 {
    Complex64::new(omega, -matsubara_freq(n)).inv()
}

/// `K(1, ω) = exp(-ω)/(1+exp(-ω))`, the occupation-like factor that appears in
/// derivatives of the kernel with respect to `ω`.
#[inline]
pub(crate) fn k_one(omega: f64) -> f64 {
    k_tau_unchecked(1.0, omega)
}

/// Conversion between physical units (`τ ∈ [0, β]`, energies) and the
/// dimensionless variables used everywhere else in the crate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalScale {
    beta: f64,
}

impl PhysicalScale {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta = {beta} must be positive")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Dimensionless cutoff `Λ = β·ω_max`.
    pub fn lambda(&self, omega_max: f64) -> f64 {
        self.beta * omega_max
    }

    pub fn to_dimensionless_tau(&self, tau: f64) -> f64 {
        tau / self.beta
    }

    pub fn to_dimensionless_omega(&self, omega: f64) -> f64 {
        self.beta * omega
    }

    /// Physical Matsubara frequency `(2n+1)π/β`.
    pub fn matsubara_freq(&self, n: i64) -> f64 {
        matsubara_freq(n) / self.beta
    }

    /// Physical kernel `exp(-ωτ)/(1+exp(-βω))`; equal to the dimensionless
    /// kernel at rescaled arguments.
    pub fn k_tau(&self, tau: f64, omega: f64) -> Result<f64> {
        k_tau(self.to_dimensionless_tau(tau), self.to_dimensionless_omega(omega))
    }

    /// Physical Matsubara kernel `∫₀^β K exp(iν_n τ) dτ = 1/(ω - iν_n)`,
    /// which is `β` times the dimensionless one.
    pub fn k_matsubara(&self, n: i64, omega: f64) -> Complex64 {
        self.beta * k_matsubara(n, self.to_dimensionless_omega(omega))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gk15;

    #[test]
    fn half_at_zero_frequency() {
        assert_eq!(k_tau(0.7, 0.0).unwrap(), 0.5);
        assert_eq!(k_tau(0.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn reflection_symmetry() {
        let a = k_tau(0.25, 3.5).unwrap();
        let b = k_tau(0.75, -3.5).unwrap();
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
    }

    #[test]
    fn domain_errors() {
        assert!(k_tau(-0.1, 1.0).is_err());
        assert!(k_tau(1.1, 1.0).is_err());
        assert!(k_tau(0.5, f64::NAN).is_err());
        assert!(k_tau(0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn extreme_frequencies_are_finite() {
        for &w in &[1e7, -1e7, 2000.0, -2000.0] {
            for &t in &[0.0, 1e-9, 0.5, 1.0] {
                let k = k_tau(t, w).unwrap();
                assert!(k.is_finite() && (0.0..=1.0).contains(&k));
            }
        }
        // exp(-1000) is below the smallest subnormal; the log form carries it.
        assert_eq!(k_tau(0.5, 2000.0).unwrap(), 0.0);
        assert_eq!(ln_k_tau(0.5, 2000.0).unwrap(), -1000.0);
    }

    #[test]
    fn matsubara_examples() {
        let k = k_matsubara(0, 0.0);
        assert!(k.re.abs() < 1e-18);
        assert!((k.im - 1.0 / PI).abs() < 1e-16);
        assert_eq!(k_matsubara(-1, 2.0), k_matsubara(0, 2.0).conj());
    }

    #[test]
    fn matsubara_matches_fourier_integral() {
        let (n, w) = (3_i64, 7.1);
        let nu = matsubara_freq(n);
        let re = adaptive_gk15(|t| k_tau_unchecked(t, w) * (nu * t).cos(), 0.0, 1.0, 1e-15).value;
        let im = adaptive_gk15(|t| k_tau_unchecked(t, w) * (nu * t).sin(), 0.0, 1.0, 1e-15).value;
        let k = k_matsubara(n, w);
        assert!((k.re - re).abs() < 1e-12 && (k.im - im).abs() < 1e-12, "{k} vs {re} {im}");
    }

    #[test]
    fn physical_scaling() {
        let s = PhysicalScale::new(20.0).unwrap();
        let a = s.k_tau(5.0, 0.3).unwrap();
        let b = (-0.3 * 5.0_f64).exp() / (1.0 + (-20.0 * 0.3_f64).exp());
        assert!((a - b).abs() < 1e-15);
        let km = s.k_matsubara(2, 0.3);
        let direct = Complex64::new(0.3, -s.matsubara_freq(2)).inv();
        assert!((km - direct).norm() < 1e-14);
        assert!(PhysicalScale::new(0.0).is_err());
    }
}
