//! Factor loadings built from positions, alpha styles and cluster maps.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array3, Axis};

use super::{FactorError, Result};
use crate::covariance::sample_covariance;
use crate::ingest::{AlphaMatrix, PositionTensor, StockFactorLoadings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadingsMethod {
    /// `sum_s |P_iAs|`
    AbsSum,
    /// `sqrt(Var_s P_iAs)`
    Var,
    /// `sqrt(Var_s |P_iAs|)`
    VarAbs,
}

impl std::str::FromStr for LoadingsMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "abs_sum" => Ok(Self::AbsSum),
            "var" => Ok(Self::Var),
            "var_abs" => Ok(Self::VarAbs),
            other => Err(format!("unknown loadings method {other:?}")),
        }
    }
}

/// Scales each column to unit cross-sectional root-mean-square. All-zero
/// columns stay zero.
pub fn normalize_columns_rms(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let rms = (col.norm_squared() / n).sqrt();
        if rms > 0.0 {
            col /= rms;
        }
    }
    out
}

/// Unnormalized loadings of a `N x F x T` tensor.
pub(crate) fn raw_loadings(values: &Array3<f64>, method: LoadingsMethod) -> Result<DMatrix<f64>> {
    let (n, f, t) = values.dim();
    if method != LoadingsMethod::AbsSum && t < 2 {
        return Err(FactorError::InsufficientHistory);
    }
    let mut out = DMatrix::zeros(n, f);
    for i in 0..n {
        for a in 0..f {
            let series = (0..t).map(|s| values[[i, a, s]]);
            out[(i, a)] = match method {
                LoadingsMethod::AbsSum => series.map(f64::abs).sum(),
                LoadingsMethod::Var => std_dev(series, t),
                LoadingsMethod::VarAbs => std_dev(series.map(f64::abs), t),
            };
        }
    }
    Ok(out)
}

/// Standard deviation with divisor `t - 1`.
fn std_dev(series: impl Iterator<Item = f64> + Clone, t: usize) -> f64 {
    let mean = series.clone().sum::<f64>() / t as f64;
    let ss: f64 = series.map(|x| (x - mean) * (x - mean)).sum();
    (ss / (t - 1) as f64).sqrt()
}

/// `Omega_iA = sum_s |P_iAs|`, column-normalized.
pub fn loadings_abs_sum(p: &PositionTensor) -> DMatrix<f64> {
    normalize_columns_rms(&raw_loadings(&p.values, LoadingsMethod::AbsSum).expect("abs-sum has no preconditions"))
}

/// `Omega_iA = sqrt(Var_s P_iAs)`, column-normalized.
pub fn loadings_var(p: &PositionTensor) -> Result<DMatrix<f64>> {
    Ok(normalize_columns_rms(&raw_loadings(&p.values, LoadingsMethod::Var)?))
}

/// `Omega_iA = sqrt(Var_s |P_iAs|)`, column-normalized.
pub fn loadings_var_abs(p: &PositionTensor) -> Result<DMatrix<f64>> {
    Ok(normalize_columns_rms(&raw_loadings(&p.values, LoadingsMethod::VarAbs)?))
}

pub fn position_loadings(p: &PositionTensor, method: LoadingsMethod) -> Result<DMatrix<f64>> {
    Ok(normalize_columns_rms(&raw_loadings(&p.values, method)?))
}

/// Keeps only the `n_recent` most recent timestamps.
pub fn restrict_window(p: &PositionTensor, n_recent: usize) -> Result<PositionTensor> {
    let t = p.timestamps.len();
    if n_recent == 0 || n_recent > t {
        return Err(FactorError::InvalidModel(format!(
            "window of {n_recent} timestamps out of {t}"
        )));
    }
    let values = p.values.slice(ndarray::s![.., .., ..n_recent]).to_owned();
    Ok(PositionTensor {
        values,
        alpha_ids: p.alpha_ids.clone(),
        stock_ids: p.stock_ids.clone(),
        timestamps: p.timestamps[..n_recent].to_vec(),
    })
}

/// `P_ias = sum_A P_iAs Lambda_Aa`, then the chosen loadings method on the
/// projected tensor.
pub fn project_to_stock_factors(
    p: &PositionTensor,
    lam: &StockFactorLoadings,
    method: LoadingsMethod,
) -> Result<DMatrix<f64>> {
    if lam.stock_ids != p.stock_ids || lam.matrix.nrows() != p.stock_ids.len() {
        return Err(FactorError::UniverseMismatch);
    }
    let (n, f, t) = p.dims();
    let fs = lam.matrix.ncols();
    let mut projected = Array3::zeros((n, fs, t));
    for i in 0..n {
        for s in 0..t {
            let row = DVector::from_iterator(f, (0..f).map(|a| p.values[[i, a, s]]));
            let out = lam.matrix.tr_mul(&row);
            for b in 0..fs {
                projected[[i, b, s]] = out[b];
            }
        }
    }
    Ok(normalize_columns_rms(&raw_loadings(&projected, method)?))
}

/// Per-alpha style characteristics before standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleFactors {
    pub volatility: DVector<f64>,
    pub turnover: DVector<f64>,
    pub momentum: DVector<f64>,
}

impl StyleFactors {
    pub const NAMES: [&'static str; 3] = ["volatility", "turnover", "momentum"];

    pub fn columns(&self) -> [&DVector<f64>; 3] {
        [&self.volatility, &self.turnover, &self.momentum]
    }

    /// `N x 3` matrix of cross-sectionally standardized columns (mean 0,
    /// population standard deviation 1). Constant columns become zero.
    pub fn standardized(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.columns().iter().map(|c| standardize(c)).collect();
        DMatrix::from_columns(&cols)
    }
}

pub fn standardize(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len() as f64;
    if x.is_empty() {
        return x.clone();
    }
    let mean = x.mean();
    let centered = x.add_scalar(-mean);
    let sd = (centered.norm_squared() / n).sqrt();
    if sd <= 1e-14 * mean.abs().max(x.amax()) || sd == 0.0 {
        return DVector::zeros(x.len());
    }
    centered / sd
}

/// Volatility, turnover and momentum for each alpha. Turnover is the mean
/// L1 change of positions between consecutive timestamps (zero without
/// positions); momentum is `mean_s alpha_i / sigma_i` (zero when `sigma_i`
/// is zero).
pub fn style_factors(a: &AlphaMatrix, p: Option<&PositionTensor>) -> Result<StyleFactors> {
    let n = a.n_alphas();
    let cov = sample_covariance(a);
    let volatility = cov.sigmas.clone();
    let momentum = DVector::from_fn(n, |i, _| {
        let s = volatility[i];
        if s == 0.0 {
            0.0
        } else {
            a.values.row(i).mean() / s
        }
    });
    let mut turnover = DVector::zeros(n);
    if let Some(p) = p {
        let idx: HashMap<&str, usize> = p.alpha_ids.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
        if p.alpha_ids.len() != n {
            return Err(FactorError::AlphaMismatch);
        }
        let (_, f, t) = p.dims();
        for (i, id) in a.alpha_ids.iter().enumerate() {
            let k = *idx.get(id.as_str()).ok_or(FactorError::AlphaMismatch)?;
            if t < 2 {
                continue;
            }
            let slab = p.values.index_axis(Axis(0), k);
            let total: f64 = (0..t - 1)
                .map(|s| (0..f).map(|b| (slab[[b, s]] - slab[[b, s + 1]]).abs()).sum::<f64>())
                .sum();
            turnover[i] = total / (t - 1) as f64;
        }
    }
    Ok(StyleFactors {
        volatility,
        turnover,
        momentum,
    })
}

/// One-hot rank-quantile membership, `N x k`. Ties keep input order and
/// bucket sizes differ by at most one.
pub fn quantile_expand(factor: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = factor.len();
    if k == 0 || k > n {
        return Err(FactorError::InvalidQuantiles { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| factor[x].total_cmp(&factor[y]));
    let mut out = DMatrix::zeros(n, k);
    for (rank, &i) in order.iter().enumerate() {
        out[(i, rank * k / n)] = 1.0;
    }
    Ok(out)
}

/// Map from alphas to clusters (0-based internally).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMap {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    cluster_ids: Vec<String>,
}

impl ClusterMap {
    /// `assignment[i]` is the 0-based cluster of alpha `i`; every cluster in
    /// `0..n_clusters` must be used.
    pub fn new(assignment: Vec<usize>, n_clusters: usize) -> Result<Self> {
        if assignment.is_empty() || n_clusters == 0 {
            return Err(FactorError::InvalidClusterMap("empty".into()));
        }
        let mut sizes = vec![0; n_clusters];
        for &g in &assignment {
            if g >= n_clusters {
                return Err(FactorError::InvalidClusterMap(format!("cluster {g} out of range")));
            }
            sizes[g] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(FactorError::InvalidClusterMap(format!("cluster {empty} is empty")));
        }
        let cluster_ids = (1..=n_clusters).map(|c| format!("cluster_{c}")).collect();
        Ok(Self {
            assignment,
            sizes,
            cluster_ids,
        })
    }

    /// Clusters from arbitrary labels, numbered by first appearance.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut ids: Vec<String> = Vec::new();
        let mut idx = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                *idx.entry(l.as_ref().to_string()).or_insert_with(|| {
                    ids.push(l.as_ref().to_string());
                    ids.len() - 1
                })
            })
            .collect();
        let mut map = Self::new(assignment, ids.len())?;
        map.cluster_ids = ids;
        Ok(map)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn n_alphas(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }
}

/// `Omega_iA = 1` iff alpha `i` belongs to cluster `A`.
pub fn binary_cluster_loadings(g: &ClusterMap) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(g.n_alphas(), g.n_clusters());
    for (i, &a) in g.assignment().iter().enumerate() {
        out[(i, a)] = 1.0;
    }
    out
}
