//! Command-line front end. Each subcommand reads CSV inputs, runs one
//! pipeline stage and writes CSV or `key=value` text files into `--out`.
//!
//! Exit codes: 0 success, 2 input or usage error, 3 numeric failure,
//! 4 `q = 1` on a singular covariance, 5 singleton cluster, 6 insufficient
//! data.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use crate::allocation::{self, AllocationError, Weights};
use crate::capacity::{self, CapacityError, WeightMode};
use crate::covariance::{self, CovarianceError, CovarianceMatrix};
use crate::factor_model::{self, ClusterMap, FactorError, LoadingsMethod};
use crate::ingest::{self, AlphaMatrix, IngestError, PositionTensor};
use crate::output::{fmt_f64, write_matrix, write_vector, Report};
use crate::synthetic::{self, PlantedModel, PositionStyle};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_SINGULAR_Q1: i32 = 4;
pub const EXIT_SINGLETON: i32 = 5;
pub const EXIT_INSUFFICIENT: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "alphafactor", version, about = "Factor risk models and allocation for alpha streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample covariance, correlation, eigenvalues and truncation report.
    Cov(CovArgs),
    /// Sharpe-optimal weights and portfolio statistics.
    Weights(WeightsArgs),
    /// Factor loadings, factor covariance and specific risk.
    Factors(FactorsArgs),
    /// Capacity and P&L at capacity.
    Capacity(CapacityArgs),
    /// Impact power from ticks and execution power from fills.
    Impact(ImpactArgs),
    /// Seeded synthetic inputs with planted parameters.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CovArgs {
    #[arg(long)]
    pub alphas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightsMode {
    /// Inverse of the sample covariance.
    Dense,
    /// `C + (1-q)/q diag(C)`.
    Regularized,
    /// Residuals of the inverse-variance regression on the principal components.
    Regression,
    /// `C~ + eps diag(C)` on the truncated covariance.
    Deformed,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub alphas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "dense")]
    pub mode: WeightsMode,
    /// Required for `regularized`, in (0, 1].
    #[arg(long)]
    pub q: Option<f64>,
    /// Required for `deformed`.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorMethod {
    #[value(name = "abs_sum", alias = "abs-sum")]
    AbsSum,
    Var,
    #[value(name = "var_abs", alias = "var-abs")]
    VarAbs,
    Style,
}

impl FactorMethod {
    fn loadings(self) -> Option<LoadingsMethod> {
        match self {
            Self::AbsSum => Some(LoadingsMethod::AbsSum),
            Self::Var => Some(LoadingsMethod::Var),
            Self::VarAbs => Some(LoadingsMethod::VarAbs),
            Self::Style => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct FactorsArgs {
    #[arg(long)]
    pub alphas: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "abs_sum")]
    pub method: FactorMethod,
    #[arg(long)]
    pub positions: Option<PathBuf>,
    /// Binary cluster loadings from `alpha_id,cluster`; overrides `--method`.
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Stock risk model (`stock_id,factor_1,...`) to project positions onto.
    #[arg(long)]
    pub stock_loadings: Option<PathBuf>,
    /// Quantile buckets per style factor.
    #[arg(long)]
    pub quantiles: Option<usize>,
    /// Most recent position timestamps to use; all by default.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = factor_model::DEFAULT_RIDGE)]
    pub ridge: f64,
    #[arg(long, default_value_t = factor_model::DEFAULT_RANK_THRESHOLD)]
    pub threshold: f64,
    /// Rescale the factor part against the alpha variances.
    #[arg(long)]
    pub calibrate: bool,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Impact power `n > 1`.
    #[arg(long, default_value_t = 1.5)]
    pub power: f64,
    /// Expected return per period (single strategy).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Turnover per period (single strategy).
    #[arg(long)]
    pub turnover: Option<f64>,
    /// Linear cost per dollar traded (single strategy).
    #[arg(long, default_value_t = 0.0)]
    pub linear_cost: f64,
    /// Impact coefficient (single strategy).
    #[arg(long)]
    pub impact_coef: Option<f64>,
    /// `weights.csv` for the portfolio approximation.
    #[arg(long, requires_all = ["costs", "margin"])]
    pub weights: Option<PathBuf>,
    /// Per-alpha `alpha_id,turnover,impact_coef`.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Effective margin of the portfolio.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub rho_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CliWeightMode {
    Full,
    Sign,
}

#[derive(Debug, Args)]
pub struct ImpactArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// One per day; paired with `--quotes` in order.
    #[arg(long, required = true)]
    pub prints: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub quotes: Vec<PathBuf>,
    /// One per day, optional.
    #[arg(long)]
    pub fills: Vec<PathBuf>,
    #[arg(long, default_value_t = 78)]
    pub n_intervals: usize,
    #[arg(long, default_value_t = ingest::DEFAULT_SESSION_MS)]
    pub session_ms: i64,
    #[arg(long, value_enum, default_value = "full")]
    pub weight_mode: CliWeightMode,
    /// Comma-separated list or `start:stop:step`.
    #[arg(long, default_value = "1.1:3.0:0.1")]
    pub nu_grid: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Alphas.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Planted clusters.
    #[arg(long, default_value_t = 2)]
    pub f: usize,
    /// Observation gaps; `m + 1` observations are generated.
    #[arg(long, default_value_t = 250)]
    pub m: usize,
    /// Stocks in the position tensor.
    #[arg(long, default_value_t = 10)]
    pub stocks: usize,
    #[arg(long, default_value = "bounded")]
    pub style: PositionStyle,
    /// Tick intervals; 0 skips tick data.
    #[arg(long, default_value_t = 1000)]
    pub n_intervals: usize,
    #[arg(long, default_value_t = 1.5)]
    pub n_true: f64,
    #[arg(long, default_value_t = 0.001)]
    pub l_true: f64,
    #[arg(long, default_value_t = 0.002)]
    pub q_true: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

/// A failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<CovarianceError> for CliError {
    fn from(e: CovarianceError) -> Self {
        Self::new(EXIT_NUMERIC, e.to_string())
    }
}

impl From<AllocationError> for CliError {
    fn from(e: AllocationError) -> Self {
        let code = match e {
            AllocationError::InvalidQ(_) | AllocationError::InvalidInvestment(_) => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

impl From<FactorError> for CliError {
    fn from(e: FactorError) -> Self {
        let code = match e {
            FactorError::SingletonCluster(_) => EXIT_SINGLETON,
            FactorError::InsufficientHistory
            | FactorError::UniverseMismatch
            | FactorError::AlphaMismatch
            | FactorError::InvalidQuantiles { .. }
            | FactorError::InvalidClusterMap(_) => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

impl From<CapacityError> for CliError {
    fn from(e: CapacityError) -> Self {
        let code = match e {
            CapacityError::InsufficientData(_) => EXIT_INSUFFICIENT,
            CapacityError::InvalidParameter(_) | CapacityError::MissingBoundaryQuote(_) => EXIT_INPUT,
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command,
/// returning the exit code. Errors go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Cov(a) => cmd_cov(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Factors(a) => cmd_factors(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::Impact(a) => cmd_impact(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn out_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::input(format!("cannot create {}: {e}", p.display())))
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let mut w = create(dir, name)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, name: &str, r: &Report) -> CliResult<()> {
    write_file(dir, name, |w| r.write(w))
}

fn write_lines(dir: &Path, name: &str, lines: &[String]) -> CliResult<()> {
    write_file(dir, name, |w| {
        for l in lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

pub fn cmd_cov(a: &CovArgs) -> CliResult<()> {
    let alphas = ingest::load_alpha_matrix(&a.alphas)?;
    let c = covariance::sample_covariance(&alphas);
    out_dir(&a.out)?;
    let ids = &alphas.alpha_ids;
    write_file(&a.out, "cov.csv", |w| write_matrix(&c.c, ids, ids, "alpha_id", w))?;
    // Correlations with a zero-volatility alpha are undefined and written as NaN.
    let n = c.dim();
    let corr = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if c.sigmas[i] == 0.0 || c.sigmas[j] == 0.0 {
            f64::NAN
        } else {
            c.c[(i, j)] / (c.sigmas[i] * c.sigmas[j])
        }
    });
    write_file(&a.out, "corr.csv", |w| write_matrix(&corr, ids, ids, "alpha_id", w))?;

    let eig = covariance::eigendecompose(&c.c)?;
    write_file(&a.out, "eigenvalues.csv", |w| {
        writeln!(w, "index,eigenvalue")?;
        for (k, l) in eig.eigenvalues.iter().enumerate() {
            writeln!(w, "{k},{}", fmt_f64(*l))?;
        }
        Ok(())
    })?;
    let mut r = Report::new();
    r.int("n", n as i128).int("m", alphas.m() as i128);
    match covariance::truncate(&eig, alphas.m()) {
        Ok(t) => {
            r.int("large_count", t.rank() as i128).num("threshold", t.threshold);
        }
        Err(CovarianceError::AllSmall) => {
            r.int("large_count", 0).text("threshold", "none");
        }
        Err(e) => return Err(e.into()),
    }
    r.num("lambda_max", eig.eigenvalues.max());
    let degenerate: Vec<&str> = c.degenerate.iter().map(|&i| ids[i].as_str()).collect();
    r.int("degenerate_count", degenerate.len() as i128)
        .text("degenerate", degenerate.join(";"));
    write_report(&a.out, "truncation.txt", &r)
}

pub fn cmd_weights(a: &WeightsArgs) -> CliResult<()> {
    let alphas = ingest::load_alpha_matrix(&a.alphas)?;
    let alpha = alphas.latest();
    let c = covariance::sample_covariance(&alphas);
    let n = c.dim();
    let (weights, gamma, mut r) = match a.mode {
        WeightsMode::Dense => {
            let inv = c
                .c
                .clone()
                .cholesky()
                .map(|ch| ch.inverse())
                .ok_or_else(|| CliError::new(EXIT_NUMERIC, "sample covariance is singular; use a regularized mode"))?;
            let inv = (&inv + inv.transpose()) * 0.5;
            let mut r = Report::new();
            r.text("mode", "dense");
            (allocation::optimal_weights(&inv, &alpha)?, c.c.clone(), r)
        }
        WeightsMode::Regularized => {
            let q = a.q.ok_or_else(|| CliError::input("--q is required for mode regularized"))?;
            let w = allocation::simple_regularized_weights(&c, &alpha, q).map_err(|e| match e {
                AllocationError::SingularCovariance if q == 1.0 => CliError::new(EXIT_SINGULAR_Q1, e.to_string()),
                e => e.into(),
            })?;
            let eps = (1.0 - q) / q;
            let mut gamma = c.c.clone();
            for i in 0..n {
                gamma[(i, i)] += eps * c.c[(i, i)];
            }
            let mut r = Report::new();
            r.text("mode", "regularized").num("q", q).num("epsilon", eps);
            (w, gamma, r)
        }
        WeightsMode::Regression => {
            let t = truncated(&c, alphas.m())?;
            let (w, _) = allocation::weighted_regression_weights(&t.u_large, &c.variances(), &alpha)?;
            let mut r = Report::new();
            r.text("mode", "regression").int("large_count", t.rank() as i128);
            (w, c.c.clone(), r)
        }
        WeightsMode::Deformed => {
            let eps = a.epsilon.ok_or_else(|| CliError::input("--epsilon is required for mode deformed"))?;
            let t = truncated(&c, alphas.m())?;
            let d = covariance::Deformation::diagonal(c.variances(), eps)?;
            let w = allocation::deformed_weights(&t, &d, &alpha)?;
            let gamma = covariance::deform(&t, &d)?;
            let mut r = Report::new();
            r.text("mode", "deformed").num("epsilon", eps).int("large_count", t.rank() as i128);
            (w, gamma, r)
        }
    };
    out_dir(&a.out)?;
    write_file(&a.out, "weights.csv", |w| write_vector(&weights.w, &alphas.alpha_ids, ("alpha_id", "w"), w))?;
    r.num("investment", 1.0);
    match allocation::portfolio_stats(&weights, &alpha, &gamma, 1.0) {
        Ok(s) => {
            r.num("pnl", s.pnl).num("volatility", s.volatility).num("sharpe", s.sharpe);
        }
        Err(AllocationError::ZeroVolatilityPortfolio) => {
            r.num("pnl", alpha.dot(&weights.w)).num("volatility", 0.0).text("sharpe", "inf");
        }
        Err(e) => return Err(e.into()),
    }
    r.num("sum_abs_w", weights.w.iter().map(|x| x.abs()).sum())
        .num("norm_constant", weights.norm_constant);
    write_report(&a.out, "stats.txt", &r)
}

fn truncated(c: &CovarianceMatrix, m: usize) -> CliResult<covariance::TruncatedCov> {
    let eig = covariance::eigendecompose(&c.c)?;
    Ok(covariance::truncate(&eig, m)?)
}

/// Reorders tensor rows to `alpha_ids`.
fn align_positions(p: PositionTensor, alpha_ids: &[String]) -> CliResult<PositionTensor> {
    if p.alpha_ids == alpha_ids {
        return Ok(p);
    }
    if p.alpha_ids.len() != alpha_ids.len() {
        return Err(CliError::input("positions and alphas cover different alpha sets"));
    }
    let idx: Vec<usize> = alpha_ids
        .iter()
        .map(|id| {
            p.alpha_ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| CliError::input(format!("no positions for alpha {id}")))
        })
        .collect::<CliResult<_>>()?;
    let values = p.values.select(ndarray::Axis(0), &idx);
    Ok(PositionTensor {
        values,
        alpha_ids: alpha_ids.to_vec(),
        stock_ids: p.stock_ids,
        timestamps: p.timestamps,
    })
}

fn load_positions(a: &FactorsArgs, alphas: &AlphaMatrix, required: bool) -> CliResult<Option<PositionTensor>> {
    let Some(path) = &a.positions else {
        return if required {
            Err(CliError::input("--positions is required for position-based loadings"))
        } else {
            Ok(None)
        };
    };
    let mut p = align_positions(ingest::load_position_tensor(path)?, &alphas.alpha_ids)?;
    if let Some(k) = a.window {
        p = factor_model::restrict_window(&p, k)?;
    }
    Ok(Some(p))
}

/// Style loadings, optionally expanded into quantile buckets. All buckets of
/// the first style are kept; later styles drop their last bucket so the
/// columns stay linearly independent.
fn style_loadings(a: &FactorsArgs, alphas: &AlphaMatrix) -> CliResult<(DMatrix<f64>, Vec<String>)> {
    let p = load_positions(a, alphas, false)?;
    let styles = factor_model::style_factors(alphas, p.as_ref())?;
    let std = styles.standardized();
    let names = factor_model::StyleFactors::NAMES;
    let Some(k) = a.quantiles else {
        return Ok((std, names.iter().map(|s| s.to_string()).collect()));
    };
    let mut cols = Vec::new();
    let mut ids = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let q = factor_model::quantile_expand(&std.column(j).into_owned(), k)?;
        let keep = if j == 0 { k } else { k - 1 };
        for b in 0..keep {
            cols.push(q.column(b).into_owned());
            ids.push(format!("{name}_q{b}"));
        }
    }
    if cols.is_empty() {
        return Err(CliError::input("quantile expansion left no factors"));
    }
    Ok((DMatrix::from_columns(&cols), ids))
}

pub fn cmd_factors(a: &FactorsArgs) -> CliResult<()> {
    let alphas = ingest::load_alpha_matrix(&a.alphas)?;
    let c = covariance::sample_covariance(&alphas);
    let (omega, factor_ids, est) = if let Some(path) = &a.clusters {
        let labels = ingest::load_cluster_labels(path, &alphas.alpha_ids)?;
        let g = ClusterMap::from_labels(&labels)?;
        let est = factor_model::binary_cluster_phi(&c, &g)?;
        (factor_model::binary_cluster_loadings(&g), g.cluster_ids().to_vec(), est)
    } else {
        let (omega, ids) = match a.method.loadings() {
            Some(method) => {
                let p = load_positions(a, &alphas, true)?.expect("required positions");
                match &a.stock_loadings {
                    Some(lp) => {
                        let lam = ingest::load_stock_factor_loadings(lp, &p.stock_ids)?;
                        let omega = factor_model::project_to_stock_factors(&p, &lam, method)?;
                        (omega, lam.factor_ids)
                    }
                    None => (factor_model::position_loadings(&p, method)?, p.stock_ids.clone()),
                }
            }
            None => style_loadings(a, &alphas)?,
        };
        let est = factor_model::solve_phi_reduced(&c, &omega, a.ridge, a.threshold)?;
        (omega, ids, est)
    };
    let mut warnings = est.warnings.clone();
    let (omega, xi2) = if a.calibrate {
        let cal = factor_model::specific_risk_calibrate(&c.variances(), &omega, &est.phi)?;
        warnings.push(format!("calibration scale {}", fmt_f64(cal.scale)));
        warnings.extend(cal.warnings);
        (cal.omega, cal.xi2)
    } else {
        (omega, est.xi2.clone())
    };

    out_dir(&a.out)?;
    let ids = &alphas.alpha_ids;
    write_file(&a.out, "omega.csv", |w| write_matrix(&omega, ids, &factor_ids, "alpha_id", w))?;
    write_file(&a.out, "phi.csv", |w| write_matrix(&est.phi, &factor_ids, &factor_ids, "factor_id", w))?;
    write_file(&a.out, "xi2.csv", |w| write_vector(&xi2, ids, ("alpha_id", "xi2"), w))?;
    write_lines(&a.out, "warnings.txt", &warnings)?;
    let f = omega.ncols();
    let mut r = Report::new();
    r.int("effective_rank", factor_model::effective_rank(&omega, &est.phi, a.threshold) as i128)
        .int(
            "loadings_rank",
            factor_model::effective_rank(&omega, &DMatrix::identity(f, f), a.threshold) as i128,
        )
        .int("factors", f as i128)
        .num("threshold", a.threshold);
    write_report(&a.out, "effective_rank.txt", &r)
}

/// Reads `alpha_id,turnover,impact_coef` in the order of `ids`.
fn load_costs(path: &Path, ids: &[String]) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut rows = std::collections::HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::input(e.to_string()))?;
        if rec.len() != 3 {
            return Err(CliError::input(format!("costs line {} must have 3 fields", k + 2)));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::input(format!("bad number `{s}` on costs line {}", k + 2)))
        };
        rows.insert(rec[0].to_string(), (parse(&rec[1])?, parse(&rec[2])?));
    }
    ids.iter()
        .map(|id| rows.get(id).copied().ok_or_else(|| CliError::input(format!("no costs for alpha {id}"))))
        .collect::<CliResult<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

/// Reads `weights.csv` as written by the `weights` command.
fn load_weights(path: &Path) -> CliResult<(Vec<String>, Weights)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut ids = Vec::new();
    let mut w = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::input(e.to_string()))?;
        if rec.len() != 2 {
            return Err(CliError::input("weights rows must be alpha_id,w"));
        }
        ids.push(rec[0].to_string());
        w.push(
            rec[1]
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("bad weight `{}`", &rec[1])))?,
        );
    }
    let weights = Weights::from_direction(DVector::from_vec(w))?;
    Ok((ids, weights))
}

pub fn cmd_capacity(a: &CapacityArgs) -> CliResult<()> {
    let mut r = Report::new();
    let bound = if let Some(wp) = &a.weights {
        let (ids, w) = load_weights(wp)?;
        let (turnovers, impacts) = load_costs(a.costs.as_ref().expect("clap requires costs"), &ids)?;
        let margin = a.margin.expect("clap requires margin");
        let tau = capacity::abs_weighted(&turnovers, &w)?;
        let kappa = capacity::abs_weighted(&impacts, &w)?;
        let inputs = capacity::PortfolioCapacityInputs {
            margin,
            tau,
            kappa,
            rho_star: a.rho_star,
            power: a.power,
        };
        let investment = capacity::portfolio_capacity(&inputs)?;
        let b = capacity::capacity_bound(margin, a.rho_star * tau, a.rho_star * kappa, a.power)?;
        r.text("model", "portfolio")
            .num("tau", tau)
            .num("kappa", kappa)
            .num("rho_star", a.rho_star)
            .num("turnover", a.rho_star * tau)
            .num("impact_coef", a.rho_star * kappa)
            .num("effective_margin", margin);
        capacity::CapacityBound { investment, ..b }
    } else {
        let missing = |flag: &str| CliError::input(format!("{flag} is required without --weights"));
        let alpha = a.alpha.ok_or_else(|| missing("--alpha"))?;
        let turnover = a.turnover.ok_or_else(|| missing("--turnover"))?;
        let q = a.impact_coef.ok_or_else(|| missing("--impact-coef"))?;
        let margin = capacity::effective_margin(alpha, turnover, a.linear_cost)?;
        r.text("model", "single")
            .num("turnover", turnover)
            .num("impact_coef", q)
            .num("effective_margin", margin);
        capacity::capacity_bound(margin, turnover, q, a.power)?
    };
    r.num("power", a.power)
        .num("investment", bound.investment)
        .num("pnl", bound.pnl)
        .num("margin_at_capacity", bound.margin_at_capacity);
    out_dir(&a.out)?;
    write_report(&a.out, "capacity.txt", &r)
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_nu_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::input(format!("invalid nu grid `{s}`"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0 && stop >= start) {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
        }
        [list] => list.split(',').map(num).collect::<CliResult<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

pub fn cmd_impact(a: &ImpactArgs) -> CliResult<()> {
    if a.prints.len() != a.quotes.len() {
        return Err(CliError::input("--prints and --quotes must be given once per day"));
    }
    if !a.fills.is_empty() && a.fills.len() != a.prints.len() {
        return Err(CliError::input("--fills must be given once per day or not at all"));
    }
    let grid = parse_nu_grid(&a.nu_grid)?;
    let mode = match a.weight_mode {
        CliWeightMode::Full => WeightMode::Full,
        CliWeightMode::Sign => WeightMode::Sign,
    };
    let mut data = capacity::ImpactDataset::default();
    let mut exec = Vec::new();
    for (k, (pp, qp)) in a.prints.iter().zip(&a.quotes).enumerate() {
        let prints = ingest::read_prints(open(pp)?)?;
        let quotes = ingest::read_quotes(open(qp)?)?;
        if quotes.is_empty() {
            return Err(CliError::new(EXIT_INSUFFICIENT, format!("no quotes in {}", qp.display())));
        }
        let day = ingest::TickDay::with_session(prints, quotes, a.session_ms)?;
        let b = capacity::uniform_boundaries(0, a.session_ms, a.n_intervals)?;
        data.extend(capacity::interval_aggregate_with_boundaries(&day, &b, mode)?);
        if let Some(fp) = a.fills.get(k) {
            let fills = ingest::load_fills(fp)?;
            let mids = capacity::boundary_midquotes(&day, &b)?;
            exec.extend(capacity::execution_costs(&fills, &b, &mids)?);
        }
    }
    out_dir(&a.out)?;
    write_file(&a.out, "impact_points.csv", |w| {
        writeln!(w, "V,U")?;
        for p in &data.points {
            writeln!(w, "{},{}", fmt_f64(p.volume), fmt_f64(p.price_change))?;
        }
        Ok(())
    })?;
    let fit = capacity::estimate_impact_power(&data)?;
    let mut r = Report::new();
    r.num("n", fit.n)
        .num("slope", fit.slope)
        .num("intercept", fit.intercept)
        .num("r_squared", fit.r_squared)
        .int("points", fit.points as i128)
        .int("intervals", data.len() as i128);
    write_report(&a.out, "impact.txt", &r)?;

    if !a.fills.is_empty() {
        write_file(&a.out, "exec_points.csv", |w| {
            writeln!(w, "C,D")?;
            for p in &exec {
                writeln!(w, "{},{}", fmt_f64(p.cost), fmt_f64(p.dollars))?;
            }
            Ok(())
        })?;
        let nu = capacity::estimate_nu(&exec, &grid)?;
        let mut r = Report::new();
        r.num("L", nu.l)
            .num("Q", nu.q)
            .num("nu", nu.nu)
            .num("rss", nu.rss)
            .text("nu_identified", nu.nu_identified.to_string())
            .int("points", nu.points as i128);
        write_report(&a.out, "nu.txt", &r)?;
    }
    Ok(())
}

fn open(p: &Path) -> CliResult<File> {
    File::open(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    if a.m == 0 || a.stocks == 0 {
        return Err(CliError::input("--m and --stocks must be positive"));
    }
    let planted = PlantedModel::random_clustered(a.n, a.f, a.seed, a.m).map_err(|e| CliError::input(e.to_string()))?;
    let alphas = synthetic::gen_factor_alphas(&planted);
    let positions = synthetic::gen_positions(a.n, a.stocks, a.m, a.style, a.seed.wrapping_add(1));
    let fm = &planted.model;
    let labels: Vec<String> = (0..a.n)
        .map(|i| {
            let col = (0..fm.n_factors()).find(|&k| fm.omega[(i, k)] == 1.0).expect("binary loadings");
            fm.factor_ids[col].clone()
        })
        .collect();

    out_dir(&a.out)?;
    write_file(&a.out, "alphas.csv", |w| ingest::write_alpha_matrix(&alphas, w))?;
    write_file(&a.out, "positions.csv", |w| ingest::write_position_tensor(&positions, w))?;
    write_file(&a.out, "clusters.csv", |w| ingest::write_cluster_labels(&alphas.alpha_ids, &labels, w))?;

    let mut r = Report::new();
    r.int("seed", a.seed as i128)
        .int("n", a.n as i128)
        .int("f", a.f as i128)
        .int("m", a.m as i128)
        .text("style", format!("{:?}", a.style).to_lowercase())
        .text("gamma_positive_definite", fm.covariance().is_ok().to_string());
    for x in 0..fm.n_factors() {
        for y in 0..fm.n_factors() {
            r.num(&format!("phi_{}_{}", fm.factor_ids[x], fm.factor_ids[y]), fm.phi[(x, y)]);
        }
    }
    for (i, id) in alphas.alpha_ids.iter().enumerate() {
        r.num(&format!("xi2_{id}"), fm.xi2[i]);
    }
    if a.n_intervals > 0 {
        let (day, fills) = synthetic::gen_tick_day(a.n_true, a.l_true, a.q_true, a.n_intervals, a.noise, a.seed)
            .map_err(CliError::input)?;
        let prints: Vec<_> = day.prints.iter().map(|m| m.print).collect();
        write_file(&a.out, "prints.csv", |w| ingest::write_prints(&prints, w))?;
        write_file(&a.out, "quotes.csv", |w| ingest::write_quotes(&day.quotes, w))?;
        write_file(&a.out, "fills.csv", |w| ingest::write_fills(&fills, w))?;
        r.num("n_true", a.n_true)
            .num("l_true", a.l_true)
            .num("q_true", a.q_true)
            .num("nu_true", a.n_true)
            .num("noise", a.noise)
            .int("n_intervals", a.n_intervals as i128)
            .int("session_ms", day.session_close as i128);
    }
    write_report(&a.out, "truth.txt", &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nu_grid_forms() {
        let g = parse_nu_grid("1.1:3.0:0.1").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g, capacity::default_nu_grid());
        assert_eq!(parse_nu_grid("1.5").unwrap(), vec![1.5]);
        assert_eq!(parse_nu_grid("1.2, 2").unwrap(), vec![1.2, 2.0]);
        assert!(parse_nu_grid("2:1:0.1").is_err());
        assert!(parse_nu_grid("x").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(FactorError::SingletonCluster(0)).code, EXIT_SINGLETON);
        assert_eq!(CliError::from(CapacityError::InsufficientData(String::new())).code, EXIT_INSUFFICIENT);
        assert_eq!(CliError::from(CovarianceError::AllSmall).code, EXIT_NUMERIC);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(main_with_args(["alphafactor", "--version"]), 0);
        assert_eq!(main_with_args(["alphafactor", "cov"]), EXIT_INPUT);
    }
}
