use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use num_complex::Complex64;
use proptest::prelude::*;

use lehmann::kernel::{k_matsubara, k_tau, k_tau_unchecked, ln_k_tau, matsubara_freq, PhysicalScale};
use lehmann::quadrature::adaptive_gk15_breaks;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn big_to_f64(x: &BigFloat, cc: &mut Consts) -> f64 {
    x.format(Radix::Dec, RM, cc).unwrap().parse().unwrap()
}

/// `e^{-ωτ} / (1 + e^{-ω})` in 256-bit arithmetic.
fn big_kernel(tau: f64, omega: f64, cc: &mut Consts) -> BigFloat {
    let t = BigFloat::from_f64(tau, PREC);
    let w = BigFloat::from_f64(omega, PREC);
    let num = w.mul(&t, PREC, RM).neg().exp(PREC, RM, cc);
    let den = BigFloat::from_f64(1.0, PREC).add(&w.neg().exp(PREC, RM, cc), PREC, RM);
    num.div(&den, PREC, RM)
}

#[test]
fn trivial_values() {
    assert_eq!(k_tau(0.7, 0.0).unwrap(), 0.5);
    assert_eq!(k_tau(0.0, 0.0).unwrap(), 0.5);
    assert_eq!(k_tau(0.25, 3.5).unwrap(), k_tau(0.75, -3.5).unwrap());
}

#[test]
fn domain_errors() {
    assert!(k_tau(-0.1, 1.0).is_err());
    assert!(k_tau(1.1, 1.0).is_err());
    assert!(k_tau(0.5, f64::NAN).is_err());
    assert!(k_tau(0.5, f64::INFINITY).is_err());
}

#[test]
fn big_float_oracle_at_representable_points() {
    let mut cc = Consts::new().unwrap();
    let cases = [
        (0.5, 2.0),
        (0.1, -30.0),
        (0.9, 700.0),
        (0.5, 1400.0),
        (1e-3, 1e5),
        (0.999, -1e5),
        (0.25, -900.0),
        (0.0, 1e7),
        (1.0, -1e7),
        (0.3, 1e-9),
    ];
    for &(t, w) in &cases {
        let exact = big_to_f64(&big_kernel(t, w, &mut cc), &mut cc);
        let got = k_tau(t, w).unwrap();
        assert!(((got - exact) / exact).abs() < 1e-14, "K({t}, {w}) = {got}, oracle {exact}");
    }
}

#[test]
fn log_kernel_below_underflow() {
    // K(0.5, 2000) ≈ 5.08e-435 is not representable; its logarithm is.
    let mut cc = Consts::new().unwrap();
    let exact = big_to_f64(&big_kernel(0.5, 2000.0, &mut cc).ln(PREC, RM, &mut cc), &mut cc);
    let got = ln_k_tau(0.5, 2000.0).unwrap();
    assert!((got - exact).abs() < 1e-14 * exact.abs(), "{got} vs {exact}");
    assert!((got + 1000.0).abs() < 1e-12);
    assert_eq!(k_tau(0.5, 2000.0).unwrap(), 0.0);
}

#[test]
fn matsubara_trivial_values() {
    let v = k_matsubara(0, 0.0);
    assert!(v.re.abs() < 1e-17 && (v.im - 1.0 / std::f64::consts::PI).abs() < 1e-16);
    assert_eq!(k_matsubara(-1, 2.0), k_matsubara(0, 2.0).conj());
    assert_eq!(matsubara_freq(-1), -matsubara_freq(0));
}

/// `∫₀¹ K(τ, ω) e^{iν_n τ} dτ` by quadrature, with breakpoints at every
/// half period of the oscillation.
fn fourier_of_kernel(n: i64, w: f64) -> Complex64 {
    let nu = matsubara_freq(n);
    let m = (2 * n + 1).unsigned_abs() as usize;
    let breaks: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
    let re = adaptive_gk15_breaks(|t| k_tau_unchecked(t, w) * (nu * t).cos(), &breaks, 1e-15).value;
    let im = adaptive_gk15_breaks(|t| k_tau_unchecked(t, w) * (nu * t).sin(), &breaks, 1e-15).value;
    Complex64::new(re, im)
}

#[test]
fn matsubara_matches_quadrature() {
    let v = k_matsubara(3, 7.1);
    assert!((v - fourier_of_kernel(3, 7.1)).norm() < 1e-12);
    for &n in &[-100i64, -37, -1, 0, 5, 64, 100] {
        for &w in &[-100.0, -12.5, 0.0, 0.3, 40.0, 100.0] {
            let d = (k_matsubara(n, w) - fourier_of_kernel(n, w)).norm();
            assert!(d < 1e-12, "n = {n}, ω = {w}: {d:e}");
        }
    }
}

#[test]
fn physical_scale() {
    let s = PhysicalScale::new(20.0).unwrap();
    assert!(PhysicalScale::new(0.0).is_err());
    assert_eq!(s.to_dimensionless_tau(5.0), 0.25);
    assert_eq!(s.to_dimensionless_omega(0.5), 10.0);
    assert_eq!(s.lambda(2.0), 40.0);
    assert_eq!(s.k_tau(5.0, 0.5).unwrap(), k_tau(0.25, 10.0).unwrap());
    assert_eq!(s.matsubara_freq(2), matsubara_freq(2) / 20.0);
    let d = s.k_matsubara(2, 0.5) - k_matsubara(2, 10.0) * 20.0;
    assert!(d.norm() < 1e-14);
}

proptest! {
    #[test]
    fn symmetry_and_bounds(t in 0.0f64..=1.0, w in -1e7f64..1e7) {
        let a = k_tau(t, w).unwrap();
        let b = k_tau(1.0 - t, -w).unwrap();
        prop_assert!(a.is_finite() && (0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.max(f64::MIN_POSITIVE) + 1e-300);
    }

    #[test]
    fn strictly_positive_for_moderate_frequencies(t in 0.0f64..=1.0, w in -500.0f64..500.0) {
        let a = k_tau(t, w).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn decreasing_in_tau_for_positive_frequency(t in 0.0f64..0.99, dt in 1e-3f64..0.01, w in 1e-3f64..1e3) {
        let t2 = (t + dt).min(1.0);
        prop_assert!(k_tau(t2, w).unwrap() <= k_tau(t, w).unwrap());
    }

    #[test]
    fn matsubara_conjugate_symmetry(n in -100_000i64..100_000, w in -1e6f64..1e6) {
        let a = k_matsubara(-n - 1, w);
        let b = k_matsubara(n, w).conj();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, b);
    }
}
