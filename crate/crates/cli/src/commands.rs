//! Subcommand implementations.

use std::path::{Path, PathBuf};

use clap::Args;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use lehmann::bench::{sweep, Case, Sampling, TestFunction};
use lehmann::dlr::{BasisSpec, DlrBasis, DlrExpansion};
use lehmann::grids::{omega_fine_grid, tau_fine_grid, validate_fine_grids};
use lehmann::imtime::{dyson_matsubara, dyson_tau, ConvTensor};
use lehmann::kernel::{k_tau_unchecked, matsubara_freq, PhysicalScale};
use lehmann::syk::{k_zero, k_zero_tableau, kappa_sweep, solve, KappaConfig, Richardson, SykParams};

use crate::io::{read_basis, read_expansion, read_rows, write_rows, write_string, MatsRow, TauRow};
use crate::{BasisArgs, CliError, Domain, MethodArg};

/// Floor of the default `n_max`, so that small cutoffs still offer at least
/// `r` Matsubara candidates.
pub const MIN_DEFAULT_N_MAX: i64 = 32;

/// Largest allowed distance between a sample's τ and the basis node.
pub const NODE_TOL: f64 = 1e-12;

fn scale_of(beta: Option<f64>) -> Result<Option<PhysicalScale>, CliError> {
    Ok(beta.map(PhysicalScale::new).transpose()?)
}

fn rel_residual<T: Copy + Into<Complex64>>(fitted: &[T], samples: &[T]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&a, &b) in fitted.iter().zip(samples) {
        let (a, b): (Complex64, Complex64) = (a.into(), b.into());
        num += (a - b).norm_sqr();
        den += b.norm_sqr();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn check_count(got: usize, r: usize) -> Result<(), CliError> {
    if got != r {
        return Err(CliError::Invalid(format!("expected {r} samples (one per basis node), got {got}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct NodeRow {
    k: usize,
    omega: f64,
    tau: f64,
    n: i64,
}

pub fn build(args: &BasisArgs, beta: Option<f64>, out: Option<&PathBuf>) -> Result<(), CliError> {
    let scale = scale_of(beta)?;
    let lambda = match (args.lambda, args.omega_max, &scale) {
        (Some(l), None, _) => l,
        (None, Some(w), Some(s)) => s.lambda(w),
        (None, Some(_), None) => return Err(CliError::Invalid("--omega-max requires --beta".into())),
        (Some(_), Some(_), _) => return Err(CliError::Invalid("give either --lambda or --omega-max".into())),
        (None, None, _) => return Err(CliError::Invalid("--lambda (or --beta with --omega-max) is required".into())),
    };
    let spec = BasisSpec::new(lambda, args.eps)?.with_p(args.p)?;
    let spec = spec.with_n_max(args.n_max.unwrap_or(spec.n_max.max(MIN_DEFAULT_N_MAX)))?;
    let basis = DlrBasis::build(spec)?;
    let nodes = basis.matsu_nodes()?;
    if let Some(p) = out {
        write_string(p, &basis.to_json()?)?;
    }
    let (taus, omegas) = match &scale {
        Some(s) => (basis.tau_nodes_physical(s), basis.omegas_physical(s)),
        None => (basis.tau_nodes().to_vec(), basis.omegas().to_vec()),
    };
    println!("r = {}", basis.rank());
    let rows: Vec<NodeRow> =
        (0..basis.rank()).map(|k| NodeRow { k: k + 1, omega: omegas[k], tau: taus[k], n: nodes[k] }).collect();
    write_rows(None, &rows)
}

pub fn fit(basis_path: &Path, samples: &Path, domain: Domain, beta: Option<f64>, out: &Path) -> Result<(), CliError> {
    let basis = read_basis(basis_path)?;
    let scale = scale_of(beta)?;
    let r = basis.rank();
    let (expansion, residual) = match domain {
        Domain::Tau => {
            let rows: Vec<TauRow> = read_rows(samples)?;
            check_count(rows.len(), r)?;
            for (row, &node) in rows.iter().zip(basis.tau_nodes()) {
                let t = scale.map_or(row.tau, |s| s.to_dimensionless_tau(row.tau));
                if !((t - node).abs() <= NODE_TOL) {
                    return Err(CliError::Invalid(format!(
                        "sample at τ = {} does not match basis node {node}",
                        row.tau
                    )));
                }
            }
            let g: Vec<f64> = rows.iter().map(|row| row.value).collect();
            let e = DlrExpansion::fit_tau(&basis, &g)?;
            let res = rel_residual(&e.tau_values(), &g);
            (e, res)
        }
        Domain::Matsubara => {
            let rows: Vec<MatsRow> = read_rows(samples)?;
            check_count(rows.len(), r)?;
            for (row, &node) in rows.iter().zip(basis.matsu_nodes()?) {
                if row.n != node {
                    return Err(CliError::Invalid(format!("sample at n = {} does not match basis node {node}", row.n)));
                }
            }
            let g: Vec<Complex64> = rows.iter().map(|row| row.value() / scale.map_or(1.0, |s| s.beta())).collect();
            let e = DlrExpansion::fit_matsubara(&basis, &g)?;
            let res = rel_residual(&e.matsubara_values()?, &g);
            (e, res)
        }
    };
    write_string(out, &expansion.to_json()?)?;
    println!("residual = {residual:e}");
    Ok(())
}

/// Where `eval` evaluates.
pub enum EvalAt {
    Nodes,
    File(PathBuf),
    Count(usize),
    Range(i64, i64),
}

#[derive(Deserialize)]
struct TauPoint {
    tau: f64,
}

#[derive(Deserialize)]
struct MatsPoint {
    n: i64,
}

pub fn eval(
    basis_path: &Path,
    expansion: &Path,
    domain: Domain,
    at: EvalAt,
    beta: Option<f64>,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let basis = read_basis(basis_path)?;
    let g = read_expansion(&basis, expansion)?;
    let scale = scale_of(beta)?;
    let b = scale.map_or(1.0, |s| s.beta());
    match domain {
        Domain::Tau => {
            let taus: Vec<f64> = match at {
                EvalAt::Nodes => basis.tau_nodes().iter().map(|t| t * b).collect(),
                EvalAt::Count(c) if c >= 2 => (0..c).map(|i| b * i as f64 / (c - 1) as f64).collect(),
                EvalAt::Count(c) => return Err(CliError::Invalid(format!("--count {c} must be at least 2"))),
                EvalAt::File(p) => read_rows::<TauPoint>(&p)?.into_iter().map(|x| x.tau).collect(),
                EvalAt::Range(..) => {
                    return Err(CliError::Invalid("--n-min/--n-max apply to the Matsubara domain".into()))
                }
            };
            let rows: Vec<TauRow> = taus.iter().map(|&tau| TauRow { tau, value: g.eval_tau(tau / b) }).collect();
            write_rows(out, &rows)
        }
        Domain::Matsubara => {
            let ns: Vec<i64> = match at {
                EvalAt::Nodes => basis.matsu_nodes()?.to_vec(),
                EvalAt::Range(lo, hi) if lo <= hi => (lo..=hi).collect(),
                EvalAt::Range(lo, hi) => return Err(CliError::Invalid(format!("empty range {lo}..={hi}"))),
                EvalAt::File(p) => read_rows::<MatsPoint>(&p)?.into_iter().map(|x| x.n).collect(),
                EvalAt::Count(_) => return Err(CliError::Invalid("--count applies to the τ domain".into())),
            };
            let rows: Vec<MatsRow> = ns.iter().map(|&n| MatsRow::new(n, b * g.eval_matsubara(n))).collect();
            write_rows(out, &rows)
        }
    }
}

#[derive(Serialize)]
struct BenchRow {
    lambda: f64,
    eps: f64,
    r: usize,
    error: f64,
}

pub fn bench(
    case: Case,
    beta: f64,
    eps: &[f64],
    lambdas: &[f64],
    sampling: Sampling,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    if lambdas.is_empty() || eps.is_empty() {
        return Err(CliError::Invalid("--lambda and --eps lists must be non-empty".into()));
    }
    let points = sweep(TestFunction::new(case, beta)?, eps, lambdas, sampling)?;
    let rows: Vec<BenchRow> =
        points.iter().map(|p| BenchRow { lambda: p.lambda, eps: p.eps, r: p.rank, error: p.error }).collect();
    write_rows(out, &rows)
}

/// Samples of a test case at the nodes of a saved basis, in dimensionless
/// units.
pub fn bench_samples(
    case: Case,
    beta: f64,
    basis_path: &Path,
    domain: Domain,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let basis = read_basis(basis_path)?;
    let f = TestFunction::new(case, beta)?;
    match domain {
        Domain::Tau => {
            let rows: Vec<TauRow> =
                basis.tau_nodes().par_iter().map(|&tau| TauRow { tau, value: f.tau(tau) }).collect();
            write_rows(out, &rows)
        }
        Domain::Matsubara => {
            let rows = basis
                .matsu_nodes()?
                .iter()
                .map(|&n| Ok(MatsRow::new(n, f.matsubara(n)?)))
                .collect::<Result<Vec<_>, lehmann::Error>>()?;
            write_rows(out, &rows)
        }
    }
}

/// Self-energy input of `dyson`.
pub enum SigmaSource {
    File(PathBuf),
    Pole { e1: f64, v: f64 },
}

pub fn dyson(
    basis_path: &Path,
    e0: f64,
    sigma: SigmaSource,
    method: lehmann::syk::DysonMethod,
    beta: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    use lehmann::syk::DysonMethod;

    let basis = read_basis(basis_path)?;
    // Energies scale with β, and so does the hybridization amplitude.
    let b = scale_of(beta)?.map_or(1.0, |s| s.beta());
    let e0 = b * e0;
    let lambda = basis.spec().lambda;
    let pole = |w: f64, weight: f64| -> Result<DlrExpansion, CliError> {
        if w.abs() > lambda {
            log::warn!("pole at ω = {w} lies outside the basis cutoff Λ = {lambda}");
        }
        let v: Vec<f64> = basis.tau_nodes().iter().map(|&t| -weight * k_tau_unchecked(t, w)).collect();
        Ok(DlrExpansion::fit_tau(&basis, &v)?)
    };
    let sigma = match sigma {
        SigmaSource::File(p) => read_expansion(&basis, &p)?,
        SigmaSource::Pole { e1, v } => pole(b * e1, (b * v).powi(2))?,
    };
    let g = match method {
        DysonMethod::ImaginaryTime => {
            let g0 = pole(e0, 1.0)?;
            dyson_tau(&ConvTensor::new(&basis)?, g0.coeffs(), sigma.coeffs())?
        }
        DysonMethod::Matsubara => dyson_matsubara(&basis, |n| Complex64::new(-e0, matsubara_freq(n)), &sigma)?,
    };
    write_string(out, &g.to_json()?)?;
    let rows: Vec<TauRow> =
        basis.tau_nodes().iter().zip(g.tau_values()).map(|(&t, value)| TauRow { tau: b * t, value }).collect();
    write_rows(None, &rows)
}

/// SYK model parameters shared by `syk` and `syk-kappa`.
#[derive(Debug, Args)]
pub struct SykArgs {
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    /// Λ / β (default 5 for `syk`, 10 for `syk-kappa`).
    #[arg(long)]
    pub lambda_factor: Option<f64>,
    #[arg(long, default_value_t = 1e-14)]
    pub eps: f64,
    /// Mixing weight of the newest iterate.
    #[arg(long, default_value_t = 0.15)]
    pub w: f64,
    /// Fixed-point tolerance on node values.
    #[arg(long, default_value_t = 1e-12)]
    pub eps_fp: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "imaginary-time")]
    pub method: MethodArg,
    /// Steps of the chemical-potential continuation.
    #[arg(long, default_value_t = 1)]
    pub continuation_steps: usize,
}

impl SykArgs {
    fn params(&self, beta: f64, default_lambda_factor: f64) -> SykParams {
        SykParams {
            beta,
            j: self.j,
            mu: self.mu,
            lambda_factor: self.lambda_factor.unwrap_or(default_lambda_factor),
            eps: self.eps,
            w: self.w,
            eps_fp: self.eps_fp,
            max_iter: self.max_iter,
            method: self.method.into(),
            continuation_steps: self.continuation_steps,
        }
    }
}

/// Solves at inverse temperature `beta` and writes `G(τ)` at the τ nodes,
/// with `τ ∈ [0, β]`.
pub fn syk(args: &SykArgs, beta: f64, save: Option<&PathBuf>, out: Option<&PathBuf>) -> Result<(), CliError> {
    let s = solve(args.params(beta, 5.0), None)?;
    let basis = s.expansion.basis();
    eprintln!(
        "r = {}, iterations = {}, converged = {}, final change = {:e}, w = {}",
        basis.rank(),
        s.iterations,
        s.converged,
        s.residual_history.last().copied().unwrap_or(0.0),
        s.w
    );
    if let Some(prefix) = save {
        let with = |ext: &str| PathBuf::from(format!("{}.{ext}", prefix.display()));
        write_string(&with("basis.json"), &basis.to_json()?)?;
        write_string(&with("expansion.json"), &s.expansion.to_json()?)?;
    }
    let rows: Vec<TauRow> = basis
        .tau_nodes()
        .iter()
        .zip(s.expansion.tau_values())
        .map(|(&t, value)| TauRow { tau: beta * t, value })
        .collect();
    write_rows(out, &rows)?;
    if !s.converged {
        return Err(CliError::Numerical(format!("SYK iteration did not converge in {} steps", s.iterations)));
    }
    Ok(())
}

#[derive(Serialize)]
struct KappaRow {
    beta: f64,
    r: usize,
    kappa: f64,
}

/// `K(T)` for every `β` in `betas` (which must double), followed by the
/// extrapolated line `K(0) = …`.
pub fn syk_kappa(
    args: &SykArgs,
    betas: &[f64],
    mu0: f64,
    levels: usize,
    out: Option<&PathBuf>,
) -> Result<(), CliError> {
    let first = *betas.first().ok_or_else(|| CliError::Invalid("--betas must be non-empty".into()))?;
    let params = args.params(first, 10.0);
    params.validate()?;
    // Reject a β list that is not a doubling sequence before any solve.
    k_zero_tableau(betas, &vec![0.0; betas.len()], &Richardson::default())?;
    let config = KappaConfig { mu0, levels, ..KappaConfig::default() };
    let points = kappa_sweep(params, betas, &config).into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<KappaRow> = points.iter().map(|p| KappaRow { beta: p.beta, r: p.rank, kappa: p.kappa }).collect();
    write_rows(out, &rows)?;
    let ks: Vec<f64> = points.iter().map(|p| p.kappa).collect();
    let k0 = k_zero(betas, &ks, &Richardson::default())?;
    println!("K(0) = {k0:.10}");
    Ok(())
}

pub fn grid(lambda: f64, p: usize) -> Result<(), CliError> {
    let tg = tau_fine_grid(lambda, p)?;
    let wg = omega_fine_grid(lambda, p)?;
    let (rt, rw) = validate_fine_grids(lambda, p)?;
    println!("tau: {} panels, {} points, interpolation residual {rt:e}", tg.panels.len(), tg.len());
    println!("omega: {} panels, {} points, interpolation residual {rw:e}", wg.panels.len(), wg.len());
    Ok(())
}
