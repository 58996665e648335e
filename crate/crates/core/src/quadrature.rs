//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used to produce reference values (Lehmann integrals of continuous spectral
//! densities, convolution integrals) that are independent of the
//! representations built in this crate.

/// Kronrod abscissae on `[0, 1)`; the negative half follows by symmetry.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of the local `|K15 - G7|` estimates over accepted intervals.
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kron += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kron * h, (kron - gauss).abs() * h, abs * h.abs())
}

/// Evaluation budget of one adaptive integration.
pub const MAX_EVALUATIONS: usize = 1_000_000;

struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by global
/// adaptive bisection: the interval with the largest error estimate is split
/// until the summed estimate drops below `tol` or below the rounding floor
/// `50ε ∫|f|`, or until [`MAX_EVALUATIONS`] is spent.
pub fn adaptive_gk15<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> QuadResult {
    let mut out = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
    if a == b {
        return out;
    }
    let mut eval = |lo: f64, hi: f64, n: &mut usize| {
        let (value, error, abs) = gk15(&mut f, lo, hi);
        *n += 15;
        Piece { lo, hi, value, error, abs }
    };
    let mut heap = std::collections::BinaryHeap::new();
    let first = eval(a, b, &mut out.evaluations);
    let (mut err, mut abs) = (first.error, first.abs);
    heap.push(first);
    let mut done: Vec<Piece> = Vec::new();
    while err > tol.max(50.0 * f64::EPSILON * abs) && out.evaluations < MAX_EVALUATIONS {
        let Some(top) = heap.pop() else { break };
        let mid = 0.5 * (top.lo + top.hi);
        if !(top.lo < mid && mid < top.hi) {
            // Interval no longer splits in floating point.
            done.push(top);
            continue;
        }
        let left = eval(top.lo, mid, &mut out.evaluations);
        let right = eval(mid, top.hi, &mut out.evaluations);
        err += left.error + right.error - top.error;
        abs += left.abs + right.abs - top.abs;
        heap.push(left);
        heap.push(right);
    }
    // Sum small contributions first.
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.append(&mut done);
    pieces.sort_by(|x, y| x.value.abs().total_cmp(&y.value.abs()));
    for p in &pieces {
        out.value += p.value;
        out.error += p.error;
    }
    out
}

/// Integrates over consecutive sub-intervals delimited by `breaks` (sorted),
/// splitting the tolerance evenly.
pub fn adaptive_gk15_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: f64) -> QuadResult {
    let mut out = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        let r = adaptive_gk15(&mut f, w[0], w[1], tol / pieces);
        out.value += r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let r = adaptive_gk15(|x| x.powi(20), -1.0, 1.0, 1e-15);
        assert!((r.value - 2.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn oscillatory_and_peaked() {
        let r = adaptive_gk15(|x| (30.0 * x).cos(), 0.0, 1.0, 1e-15);
        assert!((r.value - (30.0_f64).sin() / 30.0).abs() < 1e-15);
        let r = adaptive_gk15_breaks(|x| (-1e4 * x).exp(), &[0.0, 1e-3, 1e-2, 1e-1, 1.0], 1e-18);
        assert!((r.value - 1e-4).abs() < 1e-17, "{:e}", r.value - 1e-4);
    }

    #[test]
    fn sqrt_endpoint() {
        // ∫₀¹ √(1-x²) dx = π/4, slow convergence at x = 1 but still accurate.
        let r = adaptive_gk15(|x: f64| (1.0 - x * x).max(0.0).sqrt(), 0.0, 1.0, 1e-13);
        assert!((r.value - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }
}
