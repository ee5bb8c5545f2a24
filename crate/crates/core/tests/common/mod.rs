#![allow(dead_code)]

use alphafactor::ingest::AlphaMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub use alphafactor::synthetic::rng;

pub fn normal(r: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn normal_matrix(r: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(r))
}

pub fn alpha_matrix(values: DMatrix<f64>) -> AlphaMatrix {
    let n = values.nrows();
    let cols = values.ncols();
    AlphaMatrix::new(
        values,
        (0..n).map(|i| format!("a{i}")).collect(),
        (0..cols).rev().map(|s| s as i64).collect(),
    )
    .unwrap()
}

/// Gaussian alphas with heterogeneous volatilities.
pub fn random_alphas(r: &mut ChaCha20Rng, n: usize, m: usize) -> AlphaMatrix {
    let scales: Vec<f64> = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let x = DMatrix::from_fn(n, m + 1, |i, _| scales[i] * normal(r));
    alpha_matrix(x)
}

pub fn positive_vector(r: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(0.2..3.0))
}

/// `A A^T / n + I` for Gaussian `A`.
pub fn random_spd(r: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let a = normal_matrix(r, n, n);
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n);
    (&m + m.transpose()) * 0.5
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Independent dense inverse by LU with partial pivoting.
pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().lu().try_inverse().expect("invertible")
}
