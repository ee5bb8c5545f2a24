//! Seeded generators for alpha series with planted factor structure,
//! position tensors and tick data with known impact parameters.
//!
//! All draws come from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`, with Gaussians from `rand_distr::StandardNormal`. The
//! output is a pure function of the parameters and the seed on every
//! platform.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::symmetric_eigen_sorted;
use crate::factor_model::{binary_cluster_loadings, ClusterMap, FactorError, FactorModel};
use crate::ingest::{AlphaMatrix, Fill, PositionTensor, Print, Quote, TickDay};

/// Spread of every generated quote.
pub const TICK_SPREAD: f64 = 0.02;
/// Length of each generated interval in milliseconds.
pub const TICK_INTERVAL_MS: i64 = 1000;
/// Opening midquote of a generated tick day.
pub const TICK_START_PRICE: f64 = 100.0;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A factor model used to generate data, with the seed and observation count.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub model: FactorModel,
    pub seed: u64,
    /// Observation gaps; `M + 1` samples are drawn.
    pub m: usize,
}

impl PlantedModel {
    pub fn new(model: FactorModel, seed: u64, m: usize) -> Self {
        Self { model, seed, m }
    }

    /// Binary cluster loadings from `clusters` with the given `phi` and `xi2`.
    pub fn clustered(
        clusters: &ClusterMap,
        phi: DMatrix<f64>,
        xi2: DVector<f64>,
        seed: u64,
        m: usize,
    ) -> Result<Self, FactorError> {
        let ids = clusters.cluster_ids().to_vec();
        let model = FactorModel::new(binary_cluster_loadings(clusters), phi, xi2, ids)?;
        Ok(Self::new(model, seed, m))
    }

    /// A random clustered model: `n` alphas in `f` contiguous clusters of
    /// near-equal size, `Phi = G G^T / f + 0.2 I` with standard normal `G`,
    /// and `xi^2` uniform on `[0.1, 0.3)`.
    pub fn random_clustered(n: usize, f: usize, seed: u64, m: usize) -> Result<Self, FactorError> {
        if f == 0 || n < 2 * f {
            return Err(FactorError::InvalidModel(format!(
                "need at least two alphas per cluster, got n = {n}, f = {f}"
            )));
        }
        let mut r = rng(seed ^ 0x5eed_0f_fac7);
        let g = DMatrix::from_fn(f, f, |_, _| normal(&mut r));
        let mut phi = &g * g.transpose() / f as f64;
        for a in 0..f {
            phi[(a, a)] += 0.2;
        }
        let xi2 = DVector::from_fn(n, |_, _| 0.1 + 0.2 * r.random::<f64>());
        let clusters = ClusterMap::new((0..n).map(|i| i * f / n).collect(), f)?;
        Self::clustered(&clusters, phi, xi2, seed, m)
    }
}

/// Symmetric square root `V sqrt(Lambda) V^T`, negative eigenvalues clipped.
fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let e = symmetric_eigen_sorted(m);
    let root = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.vectors * DMatrix::from_diagonal(&root) * e.vectors.transpose()
}

/// Draws `M + 1` samples of `Upsilon_i = z_i + sum_A Omega_iA f_A` with
/// `f ~ N(0, Phi)` and independent `z_i ~ N(0, xi_i^2)`. Alphas are labelled
/// `a0, a1, ...`; timestamps run `M, M-1, ..., 0`.
pub fn gen_factor_alphas(planted: &PlantedModel) -> AlphaMatrix {
    let fm = &planted.model;
    let (n, f) = fm.omega.shape();
    let cols = planted.m + 1;
    let root = symmetric_sqrt(&fm.phi);
    let xi = fm.xi2.map(f64::sqrt);
    let mut r = rng(planted.seed);
    let mut values = DMatrix::zeros(n, cols);
    for s in 0..cols {
        let g = DVector::from_fn(f, |_, _| normal(&mut r));
        let factors = &fm.omega * (&root * g);
        for i in 0..n {
            values[(i, s)] = xi[i] * normal(&mut r) + factors[i];
        }
    }
    AlphaMatrix::new(values, alpha_ids(n), timestamps(cols)).expect("generated alphas are valid")
}

fn alpha_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

fn timestamps(cols: usize) -> Vec<i64> {
    (0..cols).rev().map(|s| s as i64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositionStyle {
    /// Every holding at its bound `+-1/F` with a random sign.
    Bounded,
    /// Log-normal magnitudes with per-(alpha, stock) scales spanning orders
    /// of magnitude.
    Dispersed,
}

impl std::str::FromStr for PositionStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bounded" => Ok(Self::Bounded),
            "dispersed" => Ok(Self::Dispersed),
            other => Err(format!("unknown position style `{other}`")),
        }
    }
}

/// An `n x f x (m+1)` tensor with `sum_A |P[i,A,s]| = 1`. Stocks are labelled
/// `s0, s1, ...`.
pub fn gen_positions(n: usize, f: usize, m: usize, style: PositionStyle, seed: u64) -> PositionTensor {
    let cols = m + 1;
    let mut r = rng(seed);
    let mut values = Array3::zeros((n, f, cols));
    match style {
        PositionStyle::Bounded => {
            let bound = 1.0 / f as f64;
            for v in values.iter_mut() {
                *v = if r.random_bool(0.5) { bound } else { -bound };
            }
        }
        PositionStyle::Dispersed => {
            let scales = DMatrix::from_fn(n, f, |_, _| (1.5 * normal(&mut r)).exp());
            for i in 0..n {
                for s in 0..cols {
                    let mut total = 0.0;
                    for a in 0..f {
                        let x = scales[(i, a)] * (0.5 * normal(&mut r)).exp();
                        let x = if r.random_bool(0.5) { x } else { -x };
                        values[[i, a, s]] = x;
                        total += x.abs();
                    }
                    for a in 0..f {
                        values[[i, a, s]] /= total;
                    }
                }
            }
        }
    }
    let stocks = (0..f).map(|a| format!("s{a}")).collect();
    PositionTensor::new(values, alpha_ids(n), stocks, timestamps(cols)).expect("generated positions are normalized")
}

/// A tick day of `n_points` intervals of [`TICK_INTERVAL_MS`] each, with
/// fills in every interval.
///
/// In interval `i` the net volume `V_i` trades at the ask (buys) or the bid
/// (sells) of the quote posted at `T_{i-1}`, so every print has weight
/// `+-1`. The next quote moves the midquote by
/// `U_i = q_true sign(V_i) |V_i|^{n_true - 1} (1 + noise g_i)` with standard
/// normal `g_i`. One fill per interval realizes the cost
/// `C_i = l_true D_i + (q_true / n_true) D_i^{n_true}` against the midquote at
/// `T_{i-1}`, so the execution power equals `n_true`.
pub fn gen_tick_day(
    n_true: f64,
    l_true: f64,
    q_true: f64,
    n_points: usize,
    noise: f64,
    seed: u64,
) -> Result<(TickDay, Vec<Fill>), String> {
    if !(n_true > 1.0 && n_true.is_finite()) {
        return Err(format!("impact power must exceed 1, got {n_true}"));
    }
    if n_points == 0 {
        return Err("need at least one interval".into());
    }
    if !(q_true >= 0.0 && l_true >= 0.0 && noise >= 0.0) {
        return Err("l, q and noise must be nonnegative".into());
    }
    let mut r = rng(seed);
    let half = 0.5 * TICK_SPREAD;
    let mut mid = TICK_START_PRICE;
    let mut quotes = vec![Quote {
        time: 0,
        bid: mid - half,
        ask: mid + half,
    }];
    let mut prints = Vec::new();
    let mut fills = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let start = i as i64 * TICK_INTERVAL_MS;
        let q = *quotes.last().expect("quotes start nonempty");
        let m_prev = q.mid();
        // Lean against the drift so the midquote stays near its start.
        let p_buy = if m_prev > TICK_START_PRICE { 0.3 } else { 0.7 };
        let buy = r.random_bool(p_buy);
        let size = (r.random_range(2.0f64..5.0) * std::f64::consts::LN_10).exp();
        let n_prints = r.random_range(1..=3usize);
        for k in 0..n_prints {
            prints.push(Print {
                time: start + 100 * (k as i64 + 1),
                price: if buy { q.ask } else { q.bid },
                volume: size / n_prints as f64,
            });
        }
        let v = if buy { size } else { -size };
        let u = q_true * v.signum() * v.abs().powf(n_true - 1.0) * (1.0 + noise * normal(&mut r));
        mid = m_prev + u;

        let shares = (r.random_range(0.0f64..2.0) * std::f64::consts::LN_10).exp();
        let shares = if r.random_bool(0.5) { shares } else { -shares };
        let dollars = m_prev * shares.abs();
        let cost = l_true * dollars + q_true / n_true * dollars.powf(n_true);
        fills.push(Fill {
            time: start + 500,
            price: m_prev + cost / shares,
            shares,
        });

        quotes.push(Quote {
            time: start + TICK_INTERVAL_MS,
            bid: mid - half,
            ask: mid + half,
        });
    }
    let close = n_points as i64 * TICK_INTERVAL_MS;
    let day = TickDay::with_session(prints, quotes, close).map_err(|e| e.to_string())?;
    Ok((day, fills))
}
