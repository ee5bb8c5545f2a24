//! Sample covariance of alpha streams, its spectrum, truncation to the
//! "large" eigenvalues and the regularized deformation `C~ + eps * Delta`.
//!
//! With `M + 1` observations the sample covariance has rank at most `M`; the
//! remaining eigenvalues are rounding noise. [`truncate`] zeroes them and
//! [`invert_deformed`] inverts the deformed matrix through a `|J| x |J|`
//! system instead of a dense `N x N` inversion.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::ingest::AlphaMatrix;

/// Relative symmetry tolerance for inputs that must be symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;
/// Per-alpha factor of the eigenvalue largeness threshold (`eta = 1e-10 * N`).
pub const ETA_PER_ALPHA: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("need at least two observations per alpha")]
    TooFewObservations,
    #[error("alpha {0} has zero volatility")]
    ZeroVolatility(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("matrix is not square ({0} x {1})")]
    NotSquare(usize, usize),
    #[error("no eigenvalue exceeds the largeness threshold")]
    AllSmall,
    #[error("regulator must be positive-definite: {0}")]
    InvalidDeformation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("low-rank system Q is numerically singular")]
    SingularQ,
}

pub type Result<T> = std::result::Result<T, CovarianceError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    pub c: DMatrix<f64>,
    pub sigmas: DVector<f64>,
    /// Alphas with zero volatility. Flagged, not an error.
    pub degenerate: Vec<usize>,
}

impl CovarianceMatrix {
    /// Wraps an externally supplied covariance after checking symmetry.
    pub fn from_matrix(c: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&c)?;
        if c.diagonal().iter().any(|&v| v < 0.0) {
            return Err(CovarianceError::InvalidDeformation(
                "covariance has a negative variance".into(),
            ));
        }
        let sigmas = c.diagonal().map(f64::sqrt);
        let degenerate = degenerate_indices(&sigmas);
        Ok(Self { c, sigmas, degenerate })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate.is_empty()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.c.diagonal()
    }
}

fn degenerate_indices(sigmas: &DVector<f64>) -> Vec<usize> {
    sigmas
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Sample covariance with divisor `M` over the `M + 1` observations.
pub fn sample_covariance(a: &AlphaMatrix) -> CovarianceMatrix {
    covariance_of_rows(&a.values).expect("AlphaMatrix guarantees M >= 1")
}

/// Covariance of the rows of `x` (variables in rows, observations in
/// columns), divisor `ncols - 1`.
pub fn covariance_of_rows(x: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    let t = x.ncols();
    if t < 2 {
        return Err(CovarianceError::TooFewObservations);
    }
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        // A constant row has exactly zero variance; the rounded mean would
        // leave residuals of order one ulp.
        if row.iter().all(|&v| v == row[0]) {
            row.fill(0.0);
            continue;
        }
        let mean = row.sum() / t as f64;
        row.add_scalar_mut(-mean);
    }
    let mut c = &centered * centered.transpose() / (t - 1) as f64;
    // Exact symmetry; the product above can differ in the last ulp.
    for i in 0..c.nrows() {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let sigmas = c.diagonal().map(f64::sqrt);
    let degenerate = degenerate_indices(&sigmas);
    Ok(CovarianceMatrix { c, sigmas, degenerate })
}

/// `Psi_ij = C_ij / (sigma_i sigma_j)` with an exact unit diagonal.
pub fn correlation(c: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    if let Some(&i) = c.degenerate.first() {
        return Err(CovarianceError::ZeroVolatility(i));
    }
    let n = c.dim();
    let s = &c.sigmas;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            c.c[(i, j)] / (s[i] * s[j])
        }
    }))
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(CovarianceError::NotSquare(m.nrows(), m.ncols()));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOLERANCE * scale {
        return Err(CovarianceError::NonSymmetric(worst));
    }
    Ok(())
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors
/// (column `a` of `vectors` belongs to `eigenvalues[a]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.eigenvalues) * self.vectors.transpose()
    }
}

pub fn eigendecompose(m: &DMatrix<f64>) -> Result<EigenSystem> {
    check_symmetric(m)?;
    Ok(symmetric_eigen_sorted(m))
}

/// Symmetric eigendecomposition sorted by descending eigenvalue. The caller
/// is responsible for symmetry.
pub(crate) fn symmetric_eigen_sorted(m: &DMatrix<f64>) -> EigenSystem {
    let n = m.nrows();
    if n == 0 {
        return EigenSystem {
            eigenvalues: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenSystem { eigenvalues, vectors }
}

/// Covariance with the rounding-level eigenvalues set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedCov {
    /// `N x |J|`, columns are the retained eigenvectors.
    pub u_large: DMatrix<f64>,
    pub lambda_large: DVector<f64>,
    pub large_set: Vec<usize>,
    pub small_set: Vec<usize>,
    /// Absolute eigenvalue cut that was applied.
    pub threshold: f64,
}

impl TruncatedCov {
    pub fn dim(&self) -> usize {
        self.u_large.nrows()
    }

    pub fn rank(&self) -> usize {
        self.large_set.len()
    }

    /// `C~ = U_J diag(lambda_J) U_J^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = scale_columns(&self.u_large, &self.lambda_large);
        &scaled * self.u_large.transpose()
    }

    /// Loadings `Omega_iA = U_iA sqrt(lambda_A)`, so that `C~ = Omega Omega^T`.
    pub fn loadings(&self) -> DMatrix<f64> {
        scale_columns(&self.u_large, &self.lambda_large.map(f64::sqrt))
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &v) in out.column_iter_mut().zip(s.iter()) {
        col *= v;
    }
    out
}

/// Keeps eigenvalues above `eta * max(lambda_max, 0)` with `eta = 1e-10 * N`,
/// at most `m_obs` of them.
pub fn truncate(e: &EigenSystem, m_obs: usize) -> Result<TruncatedCov> {
    let n = e.dim();
    let lambda_max = e.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let threshold = ETA_PER_ALPHA * n as f64 * lambda_max;
    if lambda_max <= 0.0 {
        return Err(CovarianceError::AllSmall);
    }
    let mut large_set: Vec<usize> = (0..n).filter(|&a| e.eigenvalues[a] > threshold).collect();
    large_set.truncate(m_obs);
    if large_set.is_empty() {
        return Err(CovarianceError::AllSmall);
    }
    let small_set = (0..n).filter(|a| !large_set.contains(a)).collect();
    let u_large = e.vectors.select_columns(&large_set);
    let lambda_large = DVector::from_iterator(large_set.len(), large_set.iter().map(|&a| e.eigenvalues[a]));
    Ok(TruncatedCov {
        u_large,
        lambda_large,
        large_set,
        small_set,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regulator {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

/// `eps * Delta` with `Delta` symmetric positive-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation {
    delta: Regulator,
    epsilon: f64,
    /// Spectral form `Delta = X Z X^T`, kept for dense regulators.
    spectral: Option<EigenSystem>,
}

impl Deformation {
    pub fn diagonal(v: DVector<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if v.is_empty() || v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(CovarianceError::InvalidDeformation(
                "diagonal entries must be positive".into(),
            ));
        }
        Ok(Self {
            delta: Regulator::Diagonal(v),
            epsilon,
            spectral: None,
        })
    }

    pub fn dense(m: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_symmetric(&m)?;
        let spectral = symmetric_eigen_sorted(&m);
        let min = spectral.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(CovarianceError::InvalidDeformation(format!(
                "smallest eigenvalue is {min:e}"
            )));
        }
        Ok(Self {
            delta: Regulator::Dense(m),
            epsilon,
            spectral: Some(spectral),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn regulator(&self) -> &Regulator {
        &self.delta
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self {
            epsilon,
            ..self.clone()
        })
    }

    pub fn dim(&self) -> usize {
        match &self.delta {
            Regulator::Diagonal(v) => v.len(),
            Regulator::Dense(m) => m.nrows(),
        }
    }

    /// `Delta` as a dense matrix.
    pub fn delta_matrix(&self) -> DMatrix<f64> {
        match &self.delta {
            Regulator::Diagonal(v) => DMatrix::from_diagonal(v),
            Regulator::Dense(m) => m.clone(),
        }
    }

    /// Lower Cholesky factor `L` with `Delta = L L^T`.
    pub(crate) fn cholesky_factor(&self) -> DMatrix<f64> {
        match &self.delta {
            Regulator::Diagonal(v) => DMatrix::from_diagonal(&v.map(f64::sqrt)),
            Regulator::Dense(m) => Cholesky::new(m.clone())
                .expect("positive-definite by construction")
                .l(),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(CovarianceError::InvalidDeformation(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

fn check_dims(t: &TruncatedCov, d: &Deformation) -> Result<()> {
    if t.dim() != d.dim() {
        return Err(CovarianceError::DimensionMismatch(format!(
            "covariance is {} x {}, regulator is {} x {}",
            t.dim(),
            t.dim(),
            d.dim(),
            d.dim()
        )));
    }
    Ok(())
}

/// `Gamma = C~ + eps * Delta`.
pub fn deform(t: &TruncatedCov, d: &Deformation) -> Result<DMatrix<f64>> {
    check_dims(t, d)?;
    Ok(t.reconstruct() + d.delta_matrix() * d.epsilon)
}

/// `Gamma^{-1}` through the low-rank identity.
///
/// In the eigenbasis of `Delta = X Z X^T`, with `W = X^T Omega` and
/// `Omega = U_J sqrt(lambda_J)`:
///
/// `Gamma^{-1} = X [Z^{-1} - Z^{-1} W Q'^{-1} W^T Z^{-1}] X^T / eps`,
/// `Q' = eps I + W^T Z^{-1} W`,
///
/// where `Q' = eps Q` is the `|J| x |J|` system `Q = I + W^T Z^{-1} W / eps`
/// rescaled so that its entries stay bounded as `eps -> 0`. For a diagonal
/// `Delta`, `X` is the identity and no `N x N` inverse is formed.
pub fn invert_deformed(t: &TruncatedCov, d: &Deformation) -> Result<DMatrix<f64>> {
    check_dims(t, d)?;
    let eps = d.epsilon;
    let omega = t.loadings();
    match &d.delta {
        Regulator::Diagonal(v) => {
            let z_inv = v.map(|x| 1.0 / x);
            let core = woodbury_core(&omega, &z_inv, eps)?;
            Ok(core / eps)
        }
        Regulator::Dense(_) => {
            let spectral = d.spectral.as_ref().expect("dense regulator keeps its spectrum");
            let x = &spectral.vectors;
            let z_inv = spectral.eigenvalues.map(|x| 1.0 / x);
            let w = x.transpose() * &omega;
            let core = woodbury_core(&w, &z_inv, eps)?;
            Ok(x * core * x.transpose() / eps)
        }
    }
}

/// `Z^{-1} - Z^{-1} W (eps I + W^T Z^{-1} W)^{-1} W^T Z^{-1}`.
fn woodbury_core(w: &DMatrix<f64>, z_inv: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let k = w.ncols();
    let mut out = DMatrix::from_diagonal(z_inv);
    if k == 0 {
        return Ok(out);
    }
    let mut a = w.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= z_inv[i];
    }
    let mut q = w.transpose() * &a;
    for j in 0..k {
        q[(j, j)] += eps;
    }
    let chol = Cholesky::new(q).ok_or(CovarianceError::SingularQ)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x.abs()), hi.max(x.abs())));
    if !(lo > 1e-8 * hi) {
        return Err(CovarianceError::SingularQ);
    }
    let solved = chol.solve(&a.transpose());
    out -= &a * solved;
    debug_assert_eq!(out.nrows(), n);
    Ok(out)
}
