//! Python bindings for `alphafactor`.
//!
//! Matrices cross the boundary as lists of rows. Alpha histories have one row
//! per alpha with the most recent observation first.

use alphafactor::allocation::{self, Weights};
use alphafactor::capacity::{self, ExecPoint, ImpactDataset, ImpactPoint};
use alphafactor::covariance::{self, CovarianceMatrix};
use alphafactor::factor_model::{self, ClusterMap};
use alphafactor::ingest::AlphaMatrix;
use alphafactor::synthetic::{self, PlantedModel};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn alpha_matrix(rows: &[Vec<f64>]) -> PyResult<AlphaMatrix> {
    let values = to_matrix(rows)?;
    let ids = (0..values.nrows()).map(|i| format!("a{i}")).collect();
    let times = (0..values.ncols() as i64).rev().collect();
    AlphaMatrix::new(values, ids, times).map_err(err)
}

fn sample_cov(rows: &[Vec<f64>]) -> PyResult<(AlphaMatrix, CovarianceMatrix)> {
    let a = alpha_matrix(rows)?;
    let c = covariance::sample_covariance(&a);
    Ok((a, c))
}

fn weight_vec(w: Weights) -> Vec<f64> {
    w.w.iter().copied().collect()
}

/// Sample covariance (divisor `M`) of an alpha history.
#[pyfunction]
fn sample_covariance(alphas: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(&sample_cov(&alphas)?.1.c))
}

/// Eigenvalues of a symmetric matrix, largest first.
#[pyfunction]
fn eigenvalues(matrix: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let e = covariance::eigendecompose(&to_matrix(&matrix)?).map_err(err)?;
    Ok(e.eigenvalues.iter().copied().collect())
}

/// Sharpe-optimal weights from `C + (1-q)/q diag(C)`, normalized to unit
/// absolute sum.
#[pyfunction]
fn regularized_weights(alphas: Vec<Vec<f64>>, q: f64) -> PyResult<Vec<f64>> {
    let (a, c) = sample_cov(&alphas)?;
    allocation::simple_regularized_weights(&c, &a.latest(), q)
        .map(weight_vec)
        .map_err(err)
}

/// Weights from the inverse-variance regression of the latest alphas on the
/// principal components of the sample covariance.
#[pyfunction]
fn regression_weights(alphas: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let (a, c) = sample_cov(&alphas)?;
    let e = covariance::eigendecompose(&c.c).map_err(err)?;
    let t = covariance::truncate(&e, a.m()).map_err(err)?;
    allocation::weighted_regression_weights(&t.u_large, &c.variances(), &a.latest())
        .map(|(w, _)| weight_vec(w))
        .map_err(err)
}

/// `Omega Phi Omega^T + diag(xi^2)`.
#[pyclass(module = "alphafactor_py", get_all)]
struct FactorModel {
    omega: Vec<Vec<f64>>,
    phi: Vec<Vec<f64>>,
    xi2: Vec<f64>,
    warnings: Vec<String>,
}

#[pymethods]
impl FactorModel {
    /// The assembled alpha covariance.
    fn covariance(&self) -> PyResult<Vec<Vec<f64>>> {
        let g = factor_model::assemble(&to_matrix(&self.omega)?, &to_matrix(&self.phi)?, &DVector::from_vec(self.xi2.clone()))
            .map_err(err)?;
        Ok(to_rows(&g))
    }

    fn effective_rank(&self, threshold: f64) -> PyResult<usize> {
        Ok(factor_model::effective_rank(&to_matrix(&self.omega)?, &to_matrix(&self.phi)?, threshold))
    }

    fn __repr__(&self) -> String {
        format!("FactorModel(alphas={}, factors={})", self.xi2.len(), self.phi.len())
    }
}

fn model(omega: &DMatrix<f64>, est: factor_model::PhiEstimate) -> FactorModel {
    FactorModel {
        omega: to_rows(omega),
        phi: to_rows(&est.phi),
        xi2: est.xi2.iter().copied().collect(),
        warnings: est.warnings,
    }
}

/// Factor model with binary loadings from one cluster label per alpha.
#[pyfunction]
fn cluster_factor_model(alphas: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<FactorModel> {
    let (_, c) = sample_cov(&alphas)?;
    let g = ClusterMap::from_labels(&labels).map_err(err)?;
    let est = factor_model::binary_cluster_phi(&c, &g).map_err(err)?;
    Ok(model(&factor_model::binary_cluster_loadings(&g), est))
}

/// Least-squares factor covariance for given loadings.
#[pyfunction]
#[pyo3(signature = (alphas, omega, ridge = factor_model::DEFAULT_RIDGE, threshold = factor_model::DEFAULT_RANK_THRESHOLD))]
fn fit_factor_model(alphas: Vec<Vec<f64>>, omega: Vec<Vec<f64>>, ridge: f64, threshold: f64) -> PyResult<FactorModel> {
    let (_, c) = sample_cov(&alphas)?;
    let omega = to_matrix(&omega)?;
    let est = factor_model::solve_phi_reduced(&c, &omega, ridge, threshold).map_err(err)?;
    Ok(model(&omega, est))
}

#[pyclass(module = "alphafactor_py", get_all)]
struct Capacity {
    investment: f64,
    pnl: f64,
    margin_at_capacity: f64,
}

/// Capacity of a single strategy with impact `Q D^n`.
#[pyfunction]
#[pyo3(signature = (alpha, turnover, impact_coef, power = 1.5, linear_cost = 0.0))]
fn capacity_bound(alpha: f64, turnover: f64, impact_coef: f64, power: f64, linear_cost: f64) -> PyResult<Capacity> {
    let margin = capacity::effective_margin(alpha, turnover, linear_cost).map_err(err)?;
    let b = capacity::capacity_bound(margin, turnover, impact_coef, power).map_err(err)?;
    Ok(Capacity {
        investment: b.investment,
        pnl: b.pnl,
        margin_at_capacity: b.margin_at_capacity,
    })
}

#[pyclass(module = "alphafactor_py", get_all)]
struct ImpactFit {
    n: f64,
    slope: f64,
    intercept: f64,
    r_squared: f64,
    points: usize,
}

/// Impact power from per-interval signed volumes and price changes.
#[pyfunction]
fn impact_power(volumes: Vec<f64>, price_changes: Vec<f64>) -> PyResult<ImpactFit> {
    if volumes.len() != price_changes.len() {
        return Err(err("volumes and price_changes differ in length"));
    }
    let data = ImpactDataset {
        points: volumes
            .into_iter()
            .zip(price_changes)
            .map(|(volume, price_change)| ImpactPoint { volume, price_change })
            .collect(),
    };
    let f = capacity::estimate_impact_power(&data).map_err(err)?;
    Ok(ImpactFit {
        n: f.n,
        slope: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
        points: f.points,
    })
}

#[pyclass(module = "alphafactor_py", get_all)]
struct NuFit {
    l: f64,
    q: f64,
    nu: f64,
    rss: f64,
    nu_identified: bool,
}

/// Fits `C = L D + (Q/nu) D^nu` over a grid of `nu`.
#[pyfunction]
#[pyo3(signature = (costs, dollars, grid = None))]
fn execution_power(costs: Vec<f64>, dollars: Vec<f64>, grid: Option<Vec<f64>>) -> PyResult<NuFit> {
    if costs.len() != dollars.len() {
        return Err(err("costs and dollars differ in length"));
    }
    let points: Vec<ExecPoint> = costs
        .into_iter()
        .zip(dollars)
        .map(|(cost, dollars)| ExecPoint { cost, dollars })
        .collect();
    let grid = grid.unwrap_or_else(capacity::default_nu_grid);
    let f = capacity::estimate_nu(&points, &grid).map_err(err)?;
    Ok(NuFit {
        l: f.l,
        q: f.q,
        nu: f.nu,
        rss: f.rss,
        nu_identified: f.nu_identified,
    })
}

/// Seeded alpha history from a random clustered factor model. Returns the
/// alphas, the cluster labels and the planted model.
#[pyfunction]
#[pyo3(signature = (n, f, m, seed = 0))]
fn synthetic_alphas(n: usize, f: usize, m: usize, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<String>, FactorModel)> {
    let planted = PlantedModel::random_clustered(n, f, seed, m).map_err(err)?;
    let a = synthetic::gen_factor_alphas(&planted);
    let fm = &planted.model;
    let labels = (0..n)
        .map(|i| {
            let k = (0..fm.n_factors()).find(|&k| fm.omega[(i, k)] == 1.0).expect("binary loadings");
            fm.factor_ids[k].clone()
        })
        .collect();
    let truth = FactorModel {
        omega: to_rows(&fm.omega),
        phi: to_rows(&fm.phi),
        xi2: fm.xi2.iter().copied().collect(),
        warnings: Vec::new(),
    };
    Ok((to_rows(&a.values), labels, truth))
}

#[pymodule]
pub fn alphafactor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<FactorModel>()?;
    m.add_class::<Capacity>()?;
    m.add_class::<ImpactFit>()?;
    m.add_class::<NuFit>()?;
    m.add_function(wrap_pyfunction!(sample_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(regularized_weights, m)?)?;
    m.add_function(wrap_pyfunction!(regression_weights, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_factor_model, m)?)?;
    m.add_function(wrap_pyfunction!(fit_factor_model, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_bound, m)?)?;
    m.add_function(wrap_pyfunction!(impact_power, m)?)?;
    m.add_function(wrap_pyfunction!(execution_power, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_alphas, m)?)?;
    Ok(())
}
