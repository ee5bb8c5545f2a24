//! Sharpe-optimal allocation weights.
//!
//! Three routes are provided: the textbook `w ~ C^{-1} alpha` for an
//! invertible covariance, the singular limit `w ~ Theta alpha` which only
//! depends on the regulator and the retained eigenvectors, and the diagonal
//! special case of the latter, a weighted regression of `alpha` on the
//! eigenvectors without an intercept.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::covariance::{
    self, check_symmetric, eigendecompose, invert_deformed, truncate, CovarianceError, CovarianceMatrix,
    Deformation,
};

/// Relative tolerance for column-rank decisions in the regression paths.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("optimal direction is zero; nothing to allocate")]
    ZeroAlpha,
    #[error("eigenvector matrix is rank deficient under the regulator metric")]
    RankDeficientU,
    #[error("covariance is singular; choose a regularized path (q < 1)")]
    SingularCovariance,
    #[error("q must lie in (0, 1], got {0}")]
    InvalidQ(f64),
    #[error("regression weights v_i must be positive")]
    NonPositiveWeights,
    #[error("portfolio variance is zero")]
    ZeroVolatilityPortfolio,
    #[error("investment must be positive, got {0}")]
    InvalidInvestment(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

pub type Result<T> = std::result::Result<T, AllocationError>;

/// Weights normalized to `sum |w_i| = 1`; `norm_constant` is the factor that
/// was applied to the raw direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w: DVector<f64>,
    pub norm_constant: f64,
}

impl Weights {
    /// Normalizes a raw direction without flipping signs.
    pub fn from_direction(raw: DVector<f64>) -> Result<Self> {
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        if l1 == 0.0 {
            return Err(AllocationError::ZeroAlpha);
        }
        if !l1.is_finite() {
            return Err(AllocationError::Covariance(CovarianceError::SingularQ));
        }
        let norm_constant = 1.0 / l1;
        Ok(Self {
            w: raw * norm_constant,
            norm_constant,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioStats {
    pub pnl: f64,
    pub volatility: f64,
    pub sharpe: f64,
    pub investment: f64,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(AllocationError::DimensionMismatch(format!("{what} has length {got}, expected {want}")));
    }
    Ok(())
}

/// `w_i ~ sum_j C^{-1}_ij alpha_j`, normalized.
pub fn optimal_weights(c_inv: &DMatrix<f64>, alpha: &DVector<f64>) -> Result<Weights> {
    check_symmetric(c_inv)?;
    check_len("alpha", alpha.len(), c_inv.nrows())?;
    Weights::from_direction(c_inv * alpha)
}

/// Orthonormal basis of the column space of `L^{-1} U` where `Delta = L L^T`.
fn whitened_basis(l: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    let k = u.ncols();
    if k > n {
        return Err(AllocationError::RankDeficientU);
    }
    let white = l
        .clone()
        .solve_lower_triangular(u)
        .ok_or(AllocationError::RankDeficientU)?;
    let scale = white.column_iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    if scale == 0.0 {
        return Err(AllocationError::RankDeficientU);
    }
    let qr = white.qr();
    let r = qr.r();
    if (0..k).any(|j| r[(j, j)].abs() <= RANK_TOLERANCE * scale) {
        return Err(AllocationError::RankDeficientU);
    }
    Ok(qr.q())
}

/// `Theta = Delta^{-1} - Delta^{-1} U (U^T Delta^{-1} U)^{-1} U^T Delta^{-1}`,
/// evaluated as `L^{-T} (I - B B^T) L^{-1}` with `B` an orthonormal basis of
/// `L^{-1} U`.
pub fn singular_limit_projector(u_large: &DMatrix<f64>, delta: &Deformation) -> Result<DMatrix<f64>> {
    let n = delta.dim();
    check_len("eigenvector rows", u_large.nrows(), n)?;
    let l = delta.cholesky_factor();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(AllocationError::RankDeficientU)?;
    let mut middle = DMatrix::identity(n, n);
    if u_large.ncols() > 0 {
        let b = whitened_basis(&l, u_large)?;
        middle -= &b * b.transpose();
    }
    let theta = l_inv.transpose() * middle * &l_inv;
    Ok(symmetrize(theta))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Weighted regression (weights `1/v_i`, no intercept) of `alpha` on the
/// columns of `u_large`. Returns weights `w_i ~ eps_i / v_i` and the
/// residuals `eps_i`.
pub fn weighted_regression_weights(
    u_large: &DMatrix<f64>,
    v: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<(Weights, DVector<f64>)> {
    let n = v.len();
    check_len("alpha", alpha.len(), n)?;
    check_len("eigenvector rows", u_large.nrows(), n)?;
    if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(AllocationError::NonPositiveWeights);
    }
    let sqrt_v = v.map(f64::sqrt);
    let y = alpha.component_div(&sqrt_v);
    let white_resid = if u_large.ncols() == 0 {
        y.clone()
    } else {
        let l = DMatrix::from_diagonal(&sqrt_v);
        let b = whitened_basis(&l, u_large)?;
        &y - &b * (b.transpose() * &y)
    };
    let residuals = white_resid.component_mul(&sqrt_v);
    if residuals.norm() <= 1e-13 * alpha.norm() {
        return Err(AllocationError::ZeroAlpha);
    }
    let direction = white_resid.component_div(&sqrt_v);
    Ok((Weights::from_direction(direction)?, residuals))
}

/// Weights from `Gamma_1 = ((1 - q)/q) D + C` with `D = diag(C_jj)`.
///
/// For `q < 1` this is the deformation `C~ + eps D` with `eps = (1 - q)/q`,
/// inverted through the low-rank route. `q = 1` requires an invertible `C`.
pub fn simple_regularized_weights(c: &CovarianceMatrix, alpha: &DVector<f64>, q: f64) -> Result<Weights> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(AllocationError::InvalidQ(q));
    }
    let n = c.dim();
    check_len("alpha", alpha.len(), n)?;
    let e = eigendecompose(&c.c)?;
    let t = truncate(&e, n)?;
    let inv = if q == 1.0 {
        if t.rank() < n {
            return Err(AllocationError::SingularCovariance);
        }
        let inv_l = t.lambda_large.map(|l| 1.0 / l);
        &t.u_large * DMatrix::from_diagonal(&inv_l) * t.u_large.transpose()
    } else {
        if let Some(&i) = c.degenerate.first() {
            return Err(CovarianceError::ZeroVolatility(i).into());
        }
        let d = Deformation::diagonal(c.variances(), (1.0 - q) / q)?;
        invert_deformed(&t, &d)?
    };
    optimal_weights(&symmetrize(inv), alpha)
}

/// Weights from a finite deformation `C~ + eps Delta` of a truncated
/// covariance.
pub fn deformed_weights(
    t: &covariance::TruncatedCov,
    d: &Deformation,
    alpha: &DVector<f64>,
) -> Result<Weights> {
    let inv = invert_deformed(t, d)?;
    optimal_weights(&symmetrize(inv), alpha)
}

/// `P = I sum alpha_i w_i`, `R = I sqrt(w^T Gamma w)`, `S = P / R`.
pub fn portfolio_stats(
    w: &Weights,
    alpha: &DVector<f64>,
    gamma: &DMatrix<f64>,
    investment: f64,
) -> Result<PortfolioStats> {
    if !(investment > 0.0 && investment.is_finite()) {
        return Err(AllocationError::InvalidInvestment(investment));
    }
    let n = w.len();
    check_len("alpha", alpha.len(), n)?;
    if gamma.nrows() != n || gamma.ncols() != n {
        return Err(AllocationError::DimensionMismatch("gamma does not match weights".into()));
    }
    let var = w.w.dot(&(gamma * &w.w));
    if !(var > 0.0) {
        return Err(AllocationError::ZeroVolatilityPortfolio);
    }
    let pnl = investment * alpha.dot(&w.w);
    let volatility = investment * var.sqrt();
    Ok(PortfolioStats {
        pnl,
        volatility,
        sharpe: pnl / volatility,
        investment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_covariance_equal_weights() {
        let w = optimal_weights(&DMatrix::identity(2, 2), &dv(&[1.0, 1.0])).unwrap();
        assert_eq!(w.w, dv(&[0.5, 0.5]));
    }

    #[test]
    fn diagonal_covariance_inverse_variance() {
        // Direct inversion: C^{-1} alpha = (1, 1/4) -> (0.8, 0.2).
        let c = DMatrix::from_diagonal(&dv(&[1.0, 4.0]));
        let c_inv = c.try_inverse().unwrap();
        let w = optimal_weights(&c_inv, &dv(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(w.w, dv(&[0.8, 0.2]), epsilon = 1e-15);
        assert_relative_eq!(w.norm_constant, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn zero_alpha_rejected() {
        assert_eq!(
            optimal_weights(&DMatrix::identity(2, 2), &dv(&[0.0, 0.0])),
            Err(AllocationError::ZeroAlpha)
        );
    }

    #[test]
    fn negative_direction_keeps_signs() {
        let w = optimal_weights(&DMatrix::identity(2, 2), &dv(&[-1.0, -3.0])).unwrap();
        assert_eq!(w.w, dv(&[-0.25, -0.75]));
    }

    #[test]
    fn projector_without_eigenvectors_is_delta_inverse() {
        let d = Deformation::diagonal(dv(&[2.0, 4.0]), 1.0).unwrap();
        let theta = singular_limit_projector(&DMatrix::zeros(2, 0), &d).unwrap();
        assert_relative_eq!(theta, DMatrix::from_diagonal(&dv(&[0.5, 0.25])), epsilon = 1e-15);
    }

    #[test]
    fn projector_orthogonal_to_unit_column() {
        let d = Deformation::diagonal(DVector::from_element(3, 1.0), 1.0).unwrap();
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let theta = singular_limit_projector(&e1, &d).unwrap();
        let expected = DMatrix::identity(3, 3) - &e1 * e1.transpose();
        assert_relative_eq!(theta, expected, epsilon = 1e-15);
    }

    #[test]
    fn projector_rejects_dependent_columns() {
        let d = Deformation::diagonal(DVector::from_element(3, 1.0), 1.0).unwrap();
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
        assert_eq!(singular_limit_projector(&u, &d), Err(AllocationError::RankDeficientU));
    }

    #[test]
    fn intercept_only_regression_demeans() {
        let alpha = dv(&[1.0, 2.0, 6.0]);
        let ones = DMatrix::from_element(3, 1, 1.0 / 3f64.sqrt());
        let (w, eps) = weighted_regression_weights(&ones, &DVector::from_element(3, 1.0), &alpha).unwrap();
        assert_relative_eq!(eps, dv(&[-2.0, -1.0, 3.0]), epsilon = 1e-14);
        assert_relative_eq!(w.w.sum(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(w.w, dv(&[-2.0, -1.0, 3.0]) / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn regression_without_regressors() {
        let (w, eps) =
            weighted_regression_weights(&DMatrix::zeros(2, 0), &dv(&[1.0, 3.0]), &dv(&[1.0, 3.0])).unwrap();
        assert_eq!(eps, dv(&[1.0, 3.0]));
        assert_relative_eq!(w.w, dv(&[0.5, 0.5]), epsilon = 1e-15);
    }

    #[test]
    fn regression_rejects_bad_weights() {
        let r = weighted_regression_weights(&DMatrix::zeros(2, 0), &dv(&[1.0, 0.0]), &dv(&[1.0, 3.0]));
        assert_eq!(r.unwrap_err(), AllocationError::NonPositiveWeights);
    }

    #[test]
    fn single_alpha_regularized() {
        let c = CovarianceMatrix::from_matrix(DMatrix::from_element(1, 1, 0.04)).unwrap();
        for q in [1e-6, 0.5, 1.0] {
            let w = simple_regularized_weights(&c, &dv(&[0.01]), q).unwrap();
            assert_relative_eq!(w.w[0], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn q_one_on_singular_covariance() {
        let c = CovarianceMatrix::from_matrix(DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert_eq!(
            simple_regularized_weights(&c, &dv(&[1.0, 2.0]), 1.0),
            Err(AllocationError::SingularCovariance)
        );
        assert_eq!(
            simple_regularized_weights(&c, &dv(&[1.0, 2.0]), 0.0),
            Err(AllocationError::InvalidQ(0.0))
        );
    }

    #[test]
    fn small_q_approaches_inverse_variance() {
        // Dominant diagonal: Gamma_1 ~ D/q, so w_i ~ alpha_i / C_ii.
        let c = CovarianceMatrix::from_matrix(DMatrix::from_diagonal(&dv(&[1.0, 4.0, 0.25]))).unwrap();
        let alpha = dv(&[0.3, -0.2, 0.1]);
        let w = simple_regularized_weights(&c, &alpha, 1e-6).unwrap();
        let expected = Weights::from_direction(dv(&[0.3, -0.05, 0.4])).unwrap();
        assert_relative_eq!(w.w, expected.w, epsilon = 1e-12);
    }

    #[test]
    fn single_asset_stats() {
        let w = Weights::from_direction(dv(&[1.0, 0.0])).unwrap();
        let gamma = DMatrix::from_diagonal(&dv(&[0.04, 0.09]));
        let alpha = dv(&[0.01, 0.02]);
        let s1 = portfolio_stats(&w, &alpha, &gamma, 1.0).unwrap();
        let s2 = portfolio_stats(&w, &alpha, &gamma, 2.0).unwrap();
        assert_relative_eq!(s1.sharpe, 0.01 / 0.2, epsilon = 1e-15);
        assert_relative_eq!(s2.pnl, 2.0 * s1.pnl, epsilon = 1e-15);
        assert_relative_eq!(s2.volatility, 2.0 * s1.volatility, epsilon = 1e-15);
        assert_relative_eq!(s2.sharpe, s1.sharpe, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_sharpe() {
        // For the optimal weights S^2 = alpha^T C^{-1} alpha = 9 + 16.
        let alpha = dv(&[3.0, 4.0]);
        let w = optimal_weights(&DMatrix::identity(2, 2), &alpha).unwrap();
        let s = portfolio_stats(&w, &alpha, &DMatrix::identity(2, 2), 1.0).unwrap();
        assert_relative_eq!(s.sharpe * s.sharpe, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_portfolio() {
        let w = Weights::from_direction(dv(&[1.0, -1.0])).unwrap();
        let gamma = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(
            portfolio_stats(&w, &dv(&[1.0, 0.0]), &gamma, 1.0),
            Err(AllocationError::ZeroVolatilityPortfolio)
        );
        let w = Weights::from_direction(dv(&[1.0, 0.0])).unwrap();
        assert_eq!(
            portfolio_stats(&w, &dv(&[1.0, 0.0]), &gamma, 0.0),
            Err(AllocationError::InvalidInvestment(0.0))
        );
    }
}
