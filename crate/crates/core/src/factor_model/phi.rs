//! Factor covariance and specific risk from the sample alpha covariance.

use nalgebra::{DMatrix, DVector};

use super::{psd_repair, xi2_floor, FactorError, Result};
use crate::covariance::CovarianceMatrix;
use crate::factor_model::loadings::ClusterMap;

/// A factor covariance estimate with its specific variances.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEstimate {
    pub phi: DMatrix<f64>,
    pub xi2: DVector<f64>,
    /// Alphas whose specific variance was raised to the floor.
    pub floored: Vec<usize>,
    /// Whether `phi` had negative eigenvalues clipped.
    pub psd_clipped: bool,
    pub warnings: Vec<String>,
}

/// Applies the specific-variance floor, recording a warning per floored alpha.
pub(crate) fn floor_specific(
    raw: DVector<f64>,
    floor: f64,
    warnings: &mut Vec<String>,
) -> (DVector<f64>, Vec<usize>) {
    let mut floored = Vec::new();
    let xi2 = DVector::from_iterator(
        raw.len(),
        raw.iter().enumerate().map(|(i, &x)| {
            if x < floor {
                floored.push(i);
                warnings.push(format!(
                    "alpha {i}: specific variance {x:e} below floor {floor:e}, floored"
                ));
                floor
            } else {
                x
            }
        }),
    );
    (xi2, floored)
}

/// Closed forms for binary cluster loadings: cross-cluster blocks average
/// `C_ij`, diagonal blocks average the off-diagonal `C_ij` within the
/// cluster, and `xi_i^2 = C_ii - Phi_{G(i)G(i)}`.
pub fn binary_cluster_phi(c: &CovarianceMatrix, g: &ClusterMap) -> Result<PhiEstimate> {
    let n = c.dim();
    if g.n_alphas() != n {
        return Err(FactorError::DimensionMismatch(format!(
            "cluster map has {} alphas, covariance has {n}",
            g.n_alphas()
        )));
    }
    if let Some(a) = g.sizes().iter().position(|&s| s < 2) {
        return Err(FactorError::SingletonCluster(a));
    }
    let f = g.n_clusters();
    let assign = g.assignment();
    let mut sums = DMatrix::<f64>::zeros(f, f);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sums[(assign[i], assign[j])] += c.c[(i, j)];
            }
        }
    }
    let sizes = g.sizes();
    let phi = DMatrix::from_fn(f, f, |a, b| {
        let (na, nb) = (sizes[a] as f64, sizes[b] as f64);
        if a == b {
            sums[(a, a)] / (na * (na - 1.0))
        } else {
            sums[(a, b)] / (na * nb)
        }
    });
    let raw = DVector::from_fn(n, |i, _| c.c[(i, i)] - phi[(assign[i], assign[i])]);
    let mut warnings = Vec::new();
    let (xi2, floored) = floor_specific(raw, xi2_floor(&c.variances()), &mut warnings);
    Ok(PhiEstimate {
        phi,
        xi2,
        floored,
        psd_clipped: false,
        warnings,
    })
}

/// Upper-triangle index pairs `(A, B)`, `A <= B`.
fn upper_pairs(f: usize) -> Vec<(usize, usize)> {
    (0..f).flat_map(|a| (a..f).map(move |b| (a, b))).collect()
}

/// Solves the linear system that results from substituting
/// `xi_i^2 = C_ii - (Omega Phi Omega^T)_ii` into the projection of `C` onto
/// the loadings:
///
/// `Phi - Qt Omega^T diag(Omega Phi Omega^T) Omega Qt = Qt Omega^T C_off Omega Qt`
///
/// where `Qt = (Omega^T Omega)^{-1}` and `C_off` is `C` without its
/// diagonal. The `F(F+1)/2` upper-triangle entries of `Phi` are the
/// unknowns; `ridge * trace(S)` is added to the system diagonal `S`.
pub fn solve_phi_general(c: &CovarianceMatrix, omega: &DMatrix<f64>, ridge: f64) -> Result<PhiEstimate> {
    let n = c.dim();
    if omega.nrows() != n {
        return Err(FactorError::DimensionMismatch(format!(
            "loadings have {} rows, covariance has {n}",
            omega.nrows()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(FactorError::InvalidModel(format!("ridge must be nonnegative, got {ridge}")));
    }
    let f = omega.ncols();
    if f == 0 {
        return Err(FactorError::InvalidModel("no factors".into()));
    }
    let q = omega.tr_mul(omega);
    let qt = q.try_inverse().ok_or(FactorError::SingularSystem)?;
    if !qt.iter().all(|x| x.is_finite()) {
        return Err(FactorError::SingularSystem);
    }
    let pairs = upper_pairs(f);
    let dim = pairs.len();

    let mut system = DMatrix::zeros(dim, dim);
    for (k, &(cp, dp)) in pairs.iter().enumerate() {
        let mult = if cp == dp { 1.0 } else { 2.0 };
        // diag(Omega E Omega^T) for the symmetric unit matrix E at (cp, dp).
        let d = DVector::from_fn(n, |i, _| mult * omega[(i, cp)] * omega[(i, dp)]);
        let mut weighted = omega.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= d[i];
        }
        let kmat = omega.tr_mul(&weighted);
        let image = &qt * kmat * &qt;
        for (r, &(a, b)) in pairs.iter().enumerate() {
            let e = if (a, b) == (cp, dp) { 1.0 } else { 0.0 };
            system[(r, k)] = e - image[(a, b)];
        }
    }
    let mut c_off = c.c.clone();
    c_off.fill_diagonal(0.0);
    let rhs_mat = &qt * omega.tr_mul(&(c_off * omega)) * &qt;
    let rhs = DVector::from_iterator(dim, pairs.iter().map(|&(a, b)| rhs_mat[(a, b)]));

    if ridge > 0.0 {
        let shift = ridge * system.trace();
        for k in 0..dim {
            system[(k, k)] += shift;
        }
    }
    let sv = system.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-12 * smax) {
        return Err(FactorError::SingularSystem);
    }
    let x = system.lu().solve(&rhs).ok_or(FactorError::SingularSystem)?;
    let mut phi = DMatrix::zeros(f, f);
    for (k, &(a, b)) in pairs.iter().enumerate() {
        phi[(a, b)] = x[k];
        phi[(b, a)] = x[k];
    }

    let mut warnings = Vec::new();
    let (phi, psd_clipped) = psd_repair(phi);
    if psd_clipped {
        warnings.push("factor covariance had negative eigenvalues; clipped at zero".to_string());
    }
    let fitted = omega * &phi * omega.transpose();
    let raw = DVector::from_fn(n, |i, _| c.c[(i, i)] - fitted[(i, i)]);
    let (xi2, floored) = floor_specific(raw, xi2_floor(&c.variances()), &mut warnings);
    Ok(PhiEstimate {
        phi,
        xi2,
        floored,
        psd_clipped,
        warnings,
    })
}

/// [`solve_phi_general`] for loadings that may be rank deficient.
///
/// With the thin SVD `Omega = U S V^T`, only the `r` singular values above
/// `sqrt(rank_threshold) * s_max` are kept. The system is solved for
/// `Omega_r = U_r S_r` and mapped back as `Phi = V_r Phi_r V_r^T`, which
/// leaves `Omega Phi Omega^T` unchanged and keeps the original factor
/// labels. Full-rank loadings go straight to [`solve_phi_general`].
pub fn solve_phi_reduced(
    c: &CovarianceMatrix,
    omega: &DMatrix<f64>,
    ridge: f64,
    rank_threshold: f64,
) -> Result<PhiEstimate> {
    let f = omega.ncols();
    if f == 0 || omega.nrows() == 0 {
        return solve_phi_general(c, omega, ridge);
    }
    let svd = omega.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(FactorError::SingularSystem);
    }
    let cut = rank_threshold.sqrt() * smax;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > cut)
        .collect();
    if keep.len() == f {
        return solve_phi_general(c, omega, ridge);
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let omega_r = DMatrix::from_fn(omega.nrows(), keep.len(), |i, k| u[(i, keep[k])] * svd.singular_values[keep[k]]);
    let v_r = DMatrix::from_fn(f, keep.len(), |a, k| vt[(keep[k], a)]);
    let mut est = solve_phi_general(c, &omega_r, ridge)?;
    let phi = &v_r * &est.phi * v_r.transpose();
    est.phi = (&phi + phi.transpose()) * 0.5;
    est.warnings.insert(
        0,
        format!(
            "loadings have rank {} of {f}; factor covariance restricted to their row space",
            keep.len()
        ),
    );
    Ok(est)
}

/// Covariance between the two composite factors
/// `f1 = sum alpha_i nu1_A Omega1_iA` and `f2 = sum alpha_j nu2_B Omega2_jB`:
/// `sum_ij sum_AB C_ij Omega1_iA Omega2_jB nu1_A nu2_B`.
pub fn supercluster_cross_cov(
    c: &CovarianceMatrix,
    omega1: &DMatrix<f64>,
    omega2: &DMatrix<f64>,
    nu1: &DVector<f64>,
    nu2: &DVector<f64>,
) -> Result<f64> {
    let n = c.dim();
    if omega1.nrows() != n || omega2.nrows() != n || omega1.ncols() != nu1.len() || omega2.ncols() != nu2.len() {
        return Err(FactorError::DimensionMismatch("supercluster inputs".into()));
    }
    let a = omega1 * nu1;
    let b = omega2 * nu2;
    Ok(a.dot(&(&c.c * b)))
}
