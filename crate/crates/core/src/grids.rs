//! Chebyshev and Gauss–Legendre nodes, barycentric interpolation and the
//! dyadically refined composite grids that resolve the Lehmann kernel.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::k_tau_unchecked;

/// Chebyshev nodes of the first kind on `[-1, 1]`, ascending.
pub fn chebyshev_nodes(p: usize) -> Vec<f64> {
    // x_j = cos((2j-1)π/(2p)) = sin((p-2j+1)π/(2p)); the sine form is
    // exactly antisymmetric. j = p..1 gives ascending order.
    (1..=p).rev().map(|j| ((p as f64 - (2 * j) as f64 + 1.0) * PI / (2 * p) as f64).sin()).collect()
}

/// Closed-form barycentric weights `(-1)^j sin((2j-1)π/(2p))`, in the same
/// (ascending) order as [`chebyshev_nodes`].
pub fn chebyshev_bary_weights(p: usize) -> Vec<f64> {
    (1..=p)
        .rev()
        .map(|j| {
            let s = ((2 * j - 1) as f64 * PI / (2 * p) as f64).sin();
            if j % 2 == 0 {
                s
            } else {
                -s
            }
        })
        .collect()
}

/// Gauss–Legendre rule with `p` points on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(p: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1, "gauss_legendre needs at least one point");
    let mut x = vec![0.0; p];
    let mut w = vec![0.0; p];
    for i in 0..p.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (p as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (pn, dpn) = legendre_and_derivative(p, z);
            dp = dpn;
            let dz = pn / dpn;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dpn) = legendre_and_derivative(p, z);
        if dpn.is_finite() {
            dp = dpn;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[p - 1 - i] = z;
        w[i] = wi;
        w[p - 1 - i] = wi;
    }
    if p % 2 == 1 {
        x[p / 2] = 0.0;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Generic barycentric weights `1/∏(x_j - x_k)`, normalized to unit max.
pub fn bary_weights(nodes: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &xk)| xj - xk).product();
            1.0 / prod
        })
        .collect();
    let m = w.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    w.iter_mut().for_each(|v| *v /= m);
    w
}

/// Second-form barycentric evaluation with precomputed weights.
pub fn barycentric_with_weights(nodes: &[f64], weights: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&xj, &wj), &fj) in nodes.iter().zip(weights).zip(values) {
        let d = x - xj;
        if d == 0.0 {
            return fj;
        }
        let t = wj / d;
        num += t * fj;
        den += t;
    }
    num / den
}

/// Evaluates the polynomial interpolating `values` at `nodes` at the point `x`.
pub fn barycentric_eval(nodes: &[f64], values: &[f64], x: f64) -> Result<f64> {
    if nodes.len() != values.len() {
        return Err(Error::LengthMismatch { expected: nodes.len(), got: values.len() });
    }
    if nodes.is_empty() {
        return Err(Error::Domain("no interpolation nodes".into()));
    }
    let w = bary_weights(nodes);
    Ok(barycentric_with_weights(nodes, &w, values, x))
}

/// `Σ_k ℓ_k(x)²` for the Lagrange basis at `p` Chebyshev nodes.
pub fn lagrange_sumsq(p: usize, x: f64) -> f64 {
    let nodes = chebyshev_nodes(p);
    let w = chebyshev_bary_weights(p);
    if nodes.contains(&x) {
        return 1.0;
    }
    let terms: Vec<f64> = nodes.iter().zip(&w).map(|(&xk, &wk)| wk / (x - xk)).collect();
    let den: f64 = terms.iter().sum();
    terms.iter().map(|t| (t / den).powi(2)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub a: f64,
    pub b: f64,
}

impl Panel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::Domain(format!("panel [{a}, {b}] is empty")));
        }
        Ok(Self { a, b })
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    fn map(&self, x: f64) -> f64 {
        0.5 * (self.a + self.b) + x * (0.5 * (self.b - self.a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Chebyshev,
    Legendre,
}

/// Composite grid: `degree` nodes of one kind mapped onto each panel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FineGrid {
    pub panels: Vec<Panel>,
    pub degree: usize,
    pub kind: GridKind,
    pub nodes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Barycentric weights of each panel, computed from the stored nodes.
    #[serde(skip)]
    bary: Vec<f64>,
}

impl FineGrid {
    pub fn from_panels(panels: Vec<Panel>, degree: usize, kind: GridKind) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Domain("grid degree must be at least 1".into()));
        }
        if panels.is_empty() {
            return Err(Error::Domain("grid needs at least one panel".into()));
        }
        for w in panels.windows(2) {
            if w[0].b != w[1].a {
                return Err(Error::Domain("panels do not partition the domain".into()));
            }
        }
        let (ref_nodes, ref_weights) = match kind {
            GridKind::Chebyshev => (chebyshev_nodes(degree), None),
            GridKind::Legendre => {
                let (x, w) = gauss_legendre(degree);
                (x, Some(w))
            }
        };
        let nodes: Vec<f64> = panels.iter().flat_map(|pn| ref_nodes.iter().map(move |&x| pn.map(x))).collect();
        // Nodes near a panel edge far from zero carry rounding comparable to
        // tiny panel widths, so the weights must match the rounded nodes.
        let bary = panels
            .iter()
            .zip(nodes.chunks(degree))
            .flat_map(|(pn, xs)| {
                let c = 0.5 * (pn.a + pn.b);
                let h = 0.5 * pn.width();
                let t: Vec<f64> = xs.iter().map(|&x| (x - c) / h).collect();
                bary_weights(&t)
            })
            .collect();
        let weights =
            ref_weights.map(|rw| panels.iter().flat_map(|pn| rw.iter().map(move |&w| 0.5 * pn.width() * w)).collect());
        Ok(Self { panels, degree, kind, nodes, weights, bary })
    }

    /// Restores the interpolation tables after deserialization.
    pub fn rebuilt(&self) -> Result<Self> {
        Self::from_panels(self.panels.clone(), self.degree, self.kind)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.panels[0].a, self.panels[self.panels.len() - 1].b)
    }

    /// Index of the panel containing `x` (clamped to the domain).
    pub fn panel_of(&self, x: f64) -> usize {
        let idx = self.panels.partition_point(|pn| pn.b < x);
        idx.min(self.panels.len() - 1)
    }

    /// Evaluates the composite interpolant of the node `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let s = self.panel_of(x) * self.degree;
        let e = s + self.degree;
        barycentric_with_weights(&self.nodes[s..e], &self.bary[s..e], &values[s..e], x)
    }

    /// Nonzero entries of the truncated Lagrange basis at `x`: the offset of
    /// the containing panel's first node and the `degree` basis values.
    pub(crate) fn lagrange_row(&self, x: f64) -> (usize, Vec<f64>) {
        let s = self.panel_of(x) * self.degree;
        let nodes = &self.nodes[s..s + self.degree];
        let mut l = vec![0.0; self.degree];
        if let Some(k) = nodes.iter().position(|&xk| xk == x) {
            l[k] = 1.0;
        } else {
            let mut den = 0.0;
            for k in 0..self.degree {
                l[k] = self.bary[s + k] / (x - nodes[k]);
                den += l[k];
            }
            l.iter_mut().for_each(|v| *v /= den);
        }
        (s, l)
    }
}

fn refinement_levels(lambda: f64) -> Result<usize> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda = {lambda} must be at least 1")));
    }
    Ok((lambda.log2().ceil() as usize).max(1))
}

fn tau_panels(lambda: f64) -> Result<Vec<Panel>> {
    let m = refinement_levels(lambda)?;
    let mut ends = vec![0.0];
    for k in (1..=m).rev() {
        ends.push(0.5_f64.powi(k as i32));
    }
    let left = ends.clone();
    for &e in left.iter().rev().skip(1) {
        ends.push(1.0 - e);
    }
    ends.windows(2).map(|w| Panel::new(w[0], w[1])).collect()
}

fn omega_panels(lambda: f64) -> Result<Vec<Panel>> {
    let n = refinement_levels(lambda)?;
    let mut pos = vec![0.0];
    for k in (0..n).rev() {
        pos.push(lambda * 0.5_f64.powi(k as i32));
    }
    let mut ends: Vec<f64> = pos.iter().rev().map(|&x| -x).collect();
    ends.pop();
    ends.extend(pos);
    ends.windows(2).map(|w| Panel::new(w[0], w[1])).collect()
}

/// Composite grid on `[0, 1]` refined dyadically toward both endpoints.
pub fn tau_fine_grid(lambda: f64, p: usize) -> Result<FineGrid> {
    FineGrid::from_panels(tau_panels(lambda)?, p, GridKind::Chebyshev)
}

/// Composite grid on `[-Λ, Λ]` refined dyadically toward the origin.
pub fn omega_fine_grid(lambda: f64, p: usize) -> Result<FineGrid> {
    FineGrid::from_panels(omega_panels(lambda)?, p, GridKind::Chebyshev)
}

/// Legendre-node variants used by the orthonormal basis construction.
pub fn tau_fine_grid_legendre(lambda: f64, p: usize) -> Result<FineGrid> {
    FineGrid::from_panels(tau_panels(lambda)?, p, GridKind::Legendre)
}

pub fn omega_fine_grid_legendre(lambda: f64, p: usize) -> Result<FineGrid> {
    FineGrid::from_panels(omega_panels(lambda)?, p, GridKind::Legendre)
}

/// Points spaced `oversample` times more densely than the grid nodes,
/// uniformly within each panel and including the panel endpoints.
pub fn dense_test_points(grid: &FineGrid, oversample: usize) -> Vec<f64> {
    let per = oversample * grid.degree;
    let mut pts = Vec::with_capacity(per * grid.panels.len() + 1);
    for pn in &grid.panels {
        for i in 0..per {
            pts.push(pn.a + pn.width() * i as f64 / per as f64);
        }
    }
    pts.push(grid.domain().1);
    pts
}

/// Maximum error of the composite interpolants of `K` in `τ` (for a sweep of
/// fixed `ω`) and in `ω` (for a sweep of fixed `τ`).
pub fn validate_fine_grids(lambda: f64, p: usize) -> Result<(f64, f64)> {
    let tg = tau_fine_grid(lambda, p)?;
    let wg = omega_fine_grid(lambda, p)?;
    let tau_test = dense_test_points(&tg, 10);
    let omega_test = dense_test_points(&wg, 10);

    // Sweep of the fixed variable: panel endpoints and midpoints plus a few
    // grid nodes, enough to hit every length scale of the kernel.
    let omega_sweep: Vec<f64> = wg
        .panels
        .iter()
        .flat_map(|pn| [pn.a, 0.5 * (pn.a + pn.b), pn.b])
        .chain(wg.nodes.iter().step_by(7).copied())
        .collect();
    let tau_sweep: Vec<f64> = tg
        .panels
        .iter()
        .flat_map(|pn| [pn.a, 0.5 * (pn.a + pn.b), pn.b])
        .chain(tg.nodes.iter().step_by(7).copied())
        .collect();

    let interp_err = |grid: &FineGrid, test: &[f64], f: &dyn Fn(f64) -> f64| -> f64 {
        let vals: Vec<f64> = grid.nodes.iter().map(|&x| f(x)).collect();
        test.iter().map(|&x| (f(x) - grid.interpolate(&vals, x)).abs()).fold(0.0, f64::max)
    };

    let res_tau =
        omega_sweep.iter().map(|&w| interp_err(&tg, &tau_test, &|t| k_tau_unchecked(t, w))).fold(0.0, f64::max);
    let res_omega =
        tau_sweep.iter().map(|&t| interp_err(&wg, &omega_test, &|w| k_tau_unchecked(t, w))).fold(0.0, f64::max);
    Ok((res_tau, res_omega))
}
