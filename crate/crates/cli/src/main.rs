//! `dlr`: build DLR bases, fit and evaluate expansions, solve Dyson and SYK
//! equations, and run accuracy sweeps.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failure.
//! `DLR_THREADS` sets the size of the worker pool.

// `!(x <= tol)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use lehmann::bench::{Case, Sampling};
use lehmann::syk::DysonMethod;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] lehmann::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if !e.is_validation() => 3,
            CliError::Numerical(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    Tau,
    Matsubara,
}

impl From<Domain> for Sampling {
    fn from(d: Domain) -> Self {
        match d {
            Domain::Tau => Sampling::Tau,
            Domain::Matsubara => Sampling::Matsubara,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseArg {
    Semicircle,
    TwoPole,
    Bosonic,
}

impl From<CaseArg> for Case {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Semicircle => Case::Semicircle,
            CaseArg::TwoPole => Case::TwoPole,
            CaseArg::Bosonic => Case::Bosonic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    ImaginaryTime,
    Matsubara,
}

impl From<MethodArg> for DysonMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::ImaginaryTime => DysonMethod::ImaginaryTime,
            MethodArg::Matsubara => DysonMethod::Matsubara,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dlr", version, about = "Discrete Lehmann representation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Basis parameters. Give `--lambda`, or `--beta` with `--omega-max`.
#[derive(Debug, Args)]
pub struct BasisArgs {
    /// Dimensionless cutoff Λ = β ω_max.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Real-frequency support in physical units; requires `--beta`.
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 1e-14)]
    pub eps: f64,
    /// Chebyshev degree per fine-grid panel.
    #[arg(long, default_value_t = 24)]
    pub p: usize,
    /// Largest Matsubara index considered (default max(⌈Λ⌉, 32)).
    #[arg(long)]
    pub n_max: Option<i64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a basis, print r and the node table, optionally save it as JSON.
    Build {
        #[command(flatten)]
        basis: BasisArgs,
        /// Inverse temperature; node tables are printed in physical units.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an expansion to samples at the basis nodes.
    Fit {
        #[arg(long)]
        basis: PathBuf,
        /// `tau,value` or `n,re,im` CSV at exactly the basis nodes.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_enum, default_value = "tau")]
        domain: Domain,
        /// Samples are in physical units at this inverse temperature.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an expansion in either domain.
    Eval {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        expansion: PathBuf,
        #[arg(long, value_enum, default_value = "tau")]
        domain: Domain,
        /// CSV with a `tau` or `n` column; other columns are ignored.
        #[arg(long, conflicts_with_all = ["count", "n_min", "n_max"])]
        points: Option<PathBuf>,
        /// Number of uniformly spaced τ points including both ends.
        #[arg(long)]
        count: Option<usize>,
        /// First Matsubara index of a range.
        #[arg(long, allow_negative_numbers = true, requires = "n_max")]
        n_min: Option<i64>,
        /// Last Matsubara index of a range (inclusive).
        #[arg(long, allow_negative_numbers = true, requires = "n_min")]
        n_max: Option<i64>,
        /// Report τ and values in physical units.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy sweep of a reference Green's function, as `lambda,eps,r,error`.
    Bench {
        #[arg(long, value_enum)]
        case: CaseArg,
        /// Inverse temperature of the test case (spectral support [-1, 1]).
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1e-6,1e-10,1e-14")]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_enum, default_value = "tau")]
        sampling: Domain,
        /// Instead of sweeping, write samples of the case at this basis's
        /// nodes in the `--sampling` domain.
        #[arg(long)]
        samples_for: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve G = G₀ + G₀ΣG with G₀ a free level at energy `--e0`.
    Dyson {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        e0: f64,
        /// Σ as an expansion file on the same basis.
        #[arg(long, conflicts_with_all = ["e1", "v"])]
        sigma: Option<PathBuf>,
        /// Bath level of a single-pole hybridization Σ = V²/(iν - e1).
        #[arg(long, allow_negative_numbers = true, requires = "v")]
        e1: Option<f64>,
        #[arg(long, requires = "e1")]
        v: Option<f64>,
        #[arg(long, value_enum, default_value = "imaginary-time")]
        method: MethodArg,
        /// Energies are in physical units at this inverse temperature.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the SYK equations; writes G at the τ nodes as `tau,value`.
    Syk {
        #[arg(long, default_value_t = 1e4)]
        beta: f64,
        #[command(flatten)]
        params: commands::SykArgs,
        /// Also save the expansion and its basis with this path prefix.
        #[arg(long)]
        save: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compressibility K(T) over a β doubling sweep and its T → 0 limit.
    SykKappa {
        #[command(flatten)]
        params: commands::SykArgs,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800,1600,3200,6400")]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 0.04)]
        mu0: f64,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fine-grid sizes and interpolation residuals.
    Grid {
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 24)]
        p: usize,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(s) = std::env::var("DLR_THREADS") else {
        return Ok(());
    };
    let n: usize = s.trim().parse().map_err(|_| CliError::Invalid(format!("DLR_THREADS = {s:?} is not a count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Invalid(format!("DLR_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Build { basis, beta, out } => commands::build(&basis, beta, out.as_ref()),
        Command::Fit { basis, samples, domain, beta, out } => commands::fit(&basis, &samples, domain, beta, &out),
        Command::Eval { basis, expansion, domain, points, count, n_min, n_max, beta, out } => {
            let at = match (points, count, n_min.zip(n_max)) {
                (Some(p), _, _) => commands::EvalAt::File(p),
                (_, Some(c), _) => commands::EvalAt::Count(c),
                (_, _, Some((a, b))) => commands::EvalAt::Range(a, b),
                _ => commands::EvalAt::Nodes,
            };
            commands::eval(&basis, &expansion, domain, at, beta, out.as_ref())
        }
        Command::Bench { case, beta, eps, lambda, sampling, samples_for, out } => match samples_for {
            Some(b) => commands::bench_samples(case.into(), beta, &b, sampling, out.as_ref()),
            None => commands::bench(case.into(), beta, &eps, &lambda, sampling.into(), out.as_ref()),
        },
        Command::Dyson { basis, e0, sigma, e1, v, method, beta, out } => {
            let sigma = match (sigma, e1.zip(v)) {
                (Some(p), _) => commands::SigmaSource::File(p),
                (None, Some((e1, v))) => commands::SigmaSource::Pole { e1, v },
                (None, None) => return Err(CliError::Invalid("give --sigma or --e1 with --v".into())),
            };
            commands::dyson(&basis, e0, sigma, method.into(), beta, &out)
        }
        Command::Syk { beta, params, save, out } => commands::syk(&params, beta, save.as_ref(), out.as_ref()),
        Command::SykKappa { params, betas, mu0, levels, out } => {
            commands::syk_kappa(&params, &betas, mu0, levels, out.as_ref())
        }
        Command::Grid { lambda, p } => commands::grid(lambda, p),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
