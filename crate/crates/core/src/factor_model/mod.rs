//! Factor model covariance `Gamma = Xi + Omega Phi Omega^T` for alpha
//! streams: loadings, factor covariance, specific risk and assembly.

mod loadings;
mod phi;

pub use loadings::{
    binary_cluster_loadings, loadings_abs_sum, loadings_var, loadings_var_abs, normalize_columns_rms,
    position_loadings, project_to_stock_factors, quantile_expand, restrict_window, standardize, style_factors,
    ClusterMap, LoadingsMethod, StyleFactors,
};
pub use phi::{binary_cluster_phi, solve_phi_general, solve_phi_reduced, supercluster_cross_cov, PhiEstimate};

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::covariance::{symmetric_eigen_sorted, CovarianceError, CovarianceMatrix};

/// Specific variances are floored at this fraction of the median alpha
/// variance.
pub const XI2_FLOOR_FRACTION: f64 = 1e-4;
/// Relative eigenvalue floor below which `Phi` is repaired.
pub const PSD_FLOOR: f64 = 1e-10;
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("at least two timestamps are required")]
    InsufficientHistory,
    #[error("stock universe of the factor loadings does not match the positions")]
    UniverseMismatch,
    #[error("alpha ids of positions and alpha series do not match")]
    AlphaMismatch,
    #[error("need 1 <= k <= N quantiles, got k = {k}, N = {n}")]
    InvalidQuantiles { k: usize, n: usize },
    #[error("invalid cluster map: {0}")]
    InvalidClusterMap(String),
    #[error("cluster {0} has a single alpha; its factor variance is undefined")]
    SingletonCluster(usize),
    #[error("factor covariance system is singular")]
    SingularSystem,
    #[error("assembled covariance is not positive-definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid factor model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

pub type Result<T> = std::result::Result<T, FactorError>;

/// `1e-4 * median(C_ii)`, with a tiny positive fallback when the median
/// variance is zero.
pub fn xi2_floor(variances: &DVector<f64>) -> f64 {
    let mut v: Vec<f64> = variances.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    let floor = XI2_FLOOR_FRACTION * median;
    if floor > 0.0 {
        floor
    } else {
        let max = v.last().copied().unwrap_or(0.0);
        if max > 0.0 {
            1e-12 * max
        } else {
            f64::MIN_POSITIVE
        }
    }
}

/// Clips negative eigenvalues of a symmetric matrix when the most negative
/// one is below `-PSD_FLOOR * max |lambda|`. Returns whether it clipped.
pub fn psd_repair(phi: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let phi = (&phi + phi.transpose()) * 0.5;
    if phi.nrows() == 0 {
        return (phi, false);
    }
    let e = symmetric_eigen_sorted(&phi);
    let scale = e.eigenvalues.amax();
    let min = e.eigenvalues.min();
    if min >= -PSD_FLOOR * scale {
        return (phi, false);
    }
    let clipped = e.eigenvalues.map(|l| l.max(0.0));
    let out = &e.vectors * DMatrix::from_diagonal(&clipped) * e.vectors.transpose();
    ((&out + out.transpose()) * 0.5, true)
}

/// Loadings, factor covariance and specific variances.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub omega: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub xi2: DVector<f64>,
    pub factor_ids: Vec<String>,
}

impl FactorModel {
    pub fn new(omega: DMatrix<f64>, phi: DMatrix<f64>, xi2: DVector<f64>, factor_ids: Vec<String>) -> Result<Self> {
        let (n, f) = omega.shape();
        if phi.shape() != (f, f) || xi2.len() != n || factor_ids.len() != f {
            return Err(FactorError::DimensionMismatch(format!(
                "omega {n}x{f}, phi {}x{}, xi2 {}, {} factor ids",
                phi.nrows(),
                phi.ncols(),
                xi2.len(),
                factor_ids.len()
            )));
        }
        crate::covariance::check_symmetric(&phi)?;
        if f > 0 {
            let e = symmetric_eigen_sorted(&phi);
            if e.eigenvalues.min() < -PSD_FLOOR * e.eigenvalues.amax().max(f64::MIN_POSITIVE) {
                return Err(FactorError::InvalidModel("phi is not positive-semidefinite".into()));
            }
        }
        if xi2.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(FactorError::InvalidModel("specific variances must be positive".into()));
        }
        Ok(Self {
            omega,
            phi,
            xi2,
            factor_ids,
        })
    }

    pub fn n_alphas(&self) -> usize {
        self.omega.nrows()
    }

    pub fn n_factors(&self) -> usize {
        self.omega.ncols()
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        assemble(&self.omega, &self.phi, &self.xi2)
    }
}

/// `Gamma = diag(xi^2) + Omega Phi Omega^T`, checked positive-definite.
pub fn assemble(omega: &DMatrix<f64>, phi: &DMatrix<f64>, xi2: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = omega.nrows();
    if phi.nrows() != omega.ncols() || phi.ncols() != omega.ncols() || xi2.len() != n {
        return Err(FactorError::DimensionMismatch("assemble inputs".into()));
    }
    let factor = omega * phi * omega.transpose();
    let mut gamma = (&factor + factor.transpose()) * 0.5;
    for i in 0..n {
        gamma[(i, i)] += xi2[i];
    }
    if Cholesky::new(gamma.clone()).is_none() {
        return Err(FactorError::NotPositiveDefinite);
    }
    Ok(gamma)
}

/// Number of eigenvalues of `Omega Phi Omega^T` above `threshold * lambda_max`.
pub fn effective_rank(omega: &DMatrix<f64>, phi: &DMatrix<f64>, threshold: f64) -> usize {
    if omega.ncols() == 0 || omega.nrows() == 0 {
        return 0;
    }
    let m = omega * phi * omega.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let e = symmetric_eigen_sorted(&m);
    let lmax = e.eigenvalues.max();
    if !(lmax > 0.0) {
        return 0;
    }
    e.eigenvalues.iter().filter(|&&l| l > threshold * lmax).count()
}

/// Result of rescaling the factor part against the alpha variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub scale: f64,
    pub xi2: DVector<f64>,
    /// `sqrt(scale) * Omega`.
    pub omega: DMatrix<f64>,
    pub floored: Vec<usize>,
    /// False when the factor variances carry no cross-sectional spread and
    /// the scale was left at one.
    pub identified: bool,
    pub warnings: Vec<String>,
}

/// Fits `C_ii ~ s * (Omega Phi Omega^T)_ii + xi^2` with a common specific
/// level `xi^2`, clamps `s >= 0`, then sets
/// `xi_i^2 = C_ii - s (Omega Phi Omega^T)_ii` floored at [`xi2_floor`].
pub fn specific_risk_calibrate(
    c_diag: &DVector<f64>,
    omega: &DMatrix<f64>,
    phi: &DMatrix<f64>,
) -> Result<Calibration> {
    let n = c_diag.len();
    if omega.nrows() != n || phi.nrows() != omega.ncols() || phi.ncols() != omega.ncols() {
        return Err(FactorError::DimensionMismatch("calibration inputs".into()));
    }
    let fitted = omega * phi * omega.transpose();
    let fv = fitted.diagonal();
    let mut warnings = Vec::new();
    let spread = fv.add_scalar(-fv.mean());
    let var_f = spread.norm_squared();
    let scale_f = fv.amax();
    let (scale, identified) = if n >= 2 && scale_f > 0.0 && var_f > 1e-24 * scale_f * scale_f * n as f64 {
        let slope = spread.dot(&c_diag.add_scalar(-c_diag.mean())) / var_f;
        if slope < 0.0 {
            warnings.push(format!("negative variance slope {slope:e} clamped to zero"));
        }
        (slope.max(0.0), true)
    } else {
        warnings.push("factor variances have no cross-sectional spread; scale left at 1".into());
        (1.0, false)
    };
    let raw = c_diag - &fv * scale;
    let (xi2, floored) = phi::floor_specific(raw, xi2_floor(c_diag), &mut warnings);
    Ok(Calibration {
        scale,
        xi2,
        omega: omega * scale.sqrt(),
        floored,
        identified,
        warnings,
    })
}

/// One set of uniformly defined factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorBlock {
    pub omega: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

/// How off-diagonal blocks of a mixed factor covariance are filled.
#[derive(Debug, Clone, Copy)]
pub enum CrossBlocks<'a> {
    /// Uncorrelated factor sets.
    Zero,
    /// Each off-block is the equal-weighted supercluster covariance between
    /// the two sets, computed from the sample alpha covariance.
    Supercluster(&'a CovarianceMatrix),
}

/// Concatenates factor sets into one loadings matrix with a block factor
/// covariance. Returns `(omega, phi, psd_clipped)`.
pub fn assemble_blocks(blocks: &[FactorBlock], cross: CrossBlocks<'_>) -> Result<(DMatrix<f64>, DMatrix<f64>, bool)> {
    let n = blocks.first().map(|b| b.omega.nrows()).unwrap_or(0);
    if blocks.is_empty() || blocks.iter().any(|b| b.omega.nrows() != n || b.phi.shape() != (b.omega.ncols(), b.omega.ncols())) {
        return Err(FactorError::DimensionMismatch("factor blocks".into()));
    }
    let widths: Vec<usize> = blocks.iter().map(|b| b.omega.ncols()).collect();
    let total: usize = widths.iter().sum();
    let mut omega = DMatrix::zeros(n, total);
    let mut phi = DMatrix::zeros(total, total);
    let offsets: Vec<usize> = widths
        .iter()
        .scan(0, |acc, &w| {
            let o = *acc;
            *acc += w;
            Some(o)
        })
        .collect();
    for (b, block) in blocks.iter().enumerate() {
        let o = offsets[b];
        omega.view_mut((0, o), block.omega.shape()).copy_from(&block.omega);
        phi.view_mut((o, o), block.phi.shape()).copy_from(&block.phi);
    }
    if let CrossBlocks::Supercluster(c) = cross {
        for b1 in 0..blocks.len() {
            for b2 in (b1 + 1)..blocks.len() {
                let (w1, w2) = (widths[b1], widths[b2]);
                if w1 == 0 || w2 == 0 {
                    continue;
                }
                let nu1 = DVector::from_element(w1, 1.0 / w1 as f64);
                let nu2 = DVector::from_element(w2, 1.0 / w2 as f64);
                let v = supercluster_cross_cov(c, &blocks[b1].omega, &blocks[b2].omega, &nu1, &nu2)?;
                for a1 in 0..w1 {
                    for a2 in 0..w2 {
                        phi[(offsets[b1] + a1, offsets[b2] + a2)] = v;
                        phi[(offsets[b2] + a2, offsets[b1] + a1)] = v;
                    }
                }
            }
        }
    }
    let (phi, clipped) = psd_repair(phi);
    Ok((omega, phi, clipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pure_specific_risk() {
        let xi2 = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let g = assemble(&DMatrix::zeros(3, 2), &DMatrix::identity(2, 2), &xi2).unwrap();
        assert_eq!(g, DMatrix::from_diagonal(&xi2));
    }

    #[test]
    fn one_factor_closed_form() {
        let xi2 = DVector::from_vec(vec![0.1, 0.2]);
        let g = assemble(&DMatrix::from_element(2, 1, 1.0), &DMatrix::from_element(1, 1, 0.7), &xi2).unwrap();
        assert_relative_eq!(g, DMatrix::from_row_slice(2, 2, &[0.8, 0.7, 0.7, 0.9]), epsilon = 1e-15);
    }

    #[test]
    fn assemble_detects_indefinite() {
        let r = assemble(
            &DMatrix::identity(2, 2),
            &DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0])),
            &DVector::from_element(2, 0.1),
        );
        assert_eq!(r, Err(FactorError::NotPositiveDefinite));
    }

    #[test]
    fn rank_of_simple_models() {
        assert_eq!(
            effective_rank(&DMatrix::from_element(4, 1, 1.0), &DMatrix::identity(1, 1), DEFAULT_RANK_THRESHOLD),
            1
        );
        let q = DMatrix::identity(4, 2);
        assert_eq!(effective_rank(&q, &DMatrix::identity(2, 2), DEFAULT_RANK_THRESHOLD), 2);
    }

    #[test]
    fn duplicate_columns_reduce_rank() {
        // Second and third columns equal up to 1e-12; dense eigen oracle puts
        // the third eigenvalue at ~1e-24 of the first.
        let mut om = DMatrix::from_fn(5, 3, |i, a| ((i + 1) * (a + 2)) as f64 % 7.0 + 0.5);
        for i in 0..5 {
            om[(i, 2)] = om[(i, 1)] * (1.0 + 1e-12);
        }
        let r = effective_rank(&om, &DMatrix::identity(3, 3), DEFAULT_RANK_THRESHOLD);
        assert_eq!(r, 2);
    }

    #[test]
    fn calibration_on_exact_model() {
        let omega = DMatrix::from_row_slice(4, 1, &[0.5, 1.0, 1.5, 2.0]);
        let phi = DMatrix::from_element(1, 1, 0.3);
        let xi2 = DVector::from_element(4, 0.05);
        let c = assemble(&omega, &phi, &xi2).unwrap();
        let cal = specific_risk_calibrate(&c.diagonal(), &omega, &phi).unwrap();
        assert_relative_eq!(cal.scale, 1.0, epsilon = 1e-12);
        assert!(cal.floored.is_empty());
        assert_relative_eq!(cal.xi2, xi2, epsilon = 1e-12);

        let scaled = specific_risk_calibrate(&c.diagonal(), &(&omega * 3.0), &(&phi / 9.0)).unwrap();
        assert_relative_eq!(scaled.scale, cal.scale, epsilon = 1e-12);
    }

    #[test]
    fn calibration_without_factor_risk() {
        let c_diag = DVector::from_vec(vec![0.1, 0.4]);
        let cal = specific_risk_calibrate(&c_diag, &DMatrix::from_element(2, 1, 1.0), &DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(cal.xi2, c_diag);
        assert!(!cal.identified);
    }

    #[test]
    fn psd_repair_clips() {
        let (m, clipped) = psd_repair(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(clipped);
        let e = symmetric_eigen_sorted(&m);
        assert!(e.eigenvalues.min() >= -1e-12);
        let (_, clipped) = psd_repair(DMatrix::identity(2, 2));
        assert!(!clipped);
    }

    #[test]
    fn model_invariants_enforced() {
        let ok = FactorModel::new(
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(2, 0.1),
            vec!["f".into()],
        );
        assert!(ok.is_ok());
        let bad = FactorModel::new(
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_vec(vec![0.1, 0.0]),
            vec!["f".into()],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn block_assembly() {
        let c = CovarianceMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0])).unwrap();
        let b1 = FactorBlock {
            omega: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            phi: DMatrix::from_element(1, 1, 0.5),
        };
        let b2 = FactorBlock {
            omega: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            phi: DMatrix::from_element(1, 1, 0.5),
        };
        let (om, phi0, _) = assemble_blocks(&[b1.clone(), b2.clone()], CrossBlocks::Zero).unwrap();
        assert_eq!(om, DMatrix::identity(2, 2));
        assert_eq!(phi0[(0, 1)], 0.0);
        let (_, phi1, clipped) = assemble_blocks(&[b1, b2], CrossBlocks::Supercluster(&c)).unwrap();
        assert!(!clipped);
        assert_relative_eq!(phi1[(0, 1)], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn floor_uses_median_variance() {
        assert_relative_eq!(xi2_floor(&DVector::from_vec(vec![1.0, 3.0, 2.0])), 2e-4, epsilon = 1e-18);
        assert!(xi2_floor(&DVector::zeros(3)) > 0.0);
    }
}
