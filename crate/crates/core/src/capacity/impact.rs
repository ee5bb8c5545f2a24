//! Impact power from intraday prints and quotes, and the realized execution
//! power from fills.

use nalgebra::{DMatrix, DVector};

use super::{CapacityError, Result};
use crate::ingest::{Fill, TickDay};

pub const DEFAULT_NU_GRID_MIN: f64 = 1.1;
pub const DEFAULT_NU_GRID_MAX: f64 = 3.0;
pub const DEFAULT_NU_GRID_STEP: f64 = 0.1;
/// Minimum retained datapoints for the impact power regression.
pub const MIN_IMPACT_POINTS: usize = 10;
/// Minimum fill intervals with positive dollars for the execution fit.
pub const MIN_EXEC_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// `W = F((P - mid) / half-spread)` with `F(x) = sign(x) min(|x|, 1)`.
    #[default]
    Full,
    /// `sign(W)` only.
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintWeight {
    pub time: i64,
    pub volume: f64,
    /// `None` for prints in crossed or locked markets (`ask <= bid`).
    pub weight: Option<f64>,
}

fn clamp_unit(x: f64) -> f64 {
    x.signum() * x.abs().min(1.0)
}

/// Signs each print by its position in the spread: +1 at the ask, -1 at the
/// bid, 0 at the midquote, clamped outside the spread.
pub fn classify_prints(day: &TickDay, mode: WeightMode) -> Vec<PrintWeight> {
    day.prints
        .iter()
        .map(|m| {
            let (a, b, p) = (m.quote.ask, m.quote.bid, m.print.price);
            let weight = (a > b).then(|| {
                let w = clamp_unit((2.0 * p - a - b) / (a - b));
                match mode {
                    WeightMode::Full => w,
                    WeightMode::Sign => {
                        if w == 0.0 {
                            0.0
                        } else {
                            w.signum()
                        }
                    }
                }
            });
            PrintWeight {
                time: m.print.time,
                volume: m.print.volume,
                weight,
            }
        })
        .collect()
}

/// Signed weighted volume `V` and midquote change `U` over one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactPoint {
    pub volume: f64,
    pub price_change: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpactDataset {
    pub points: Vec<ImpactPoint>,
}

impl ImpactDataset {
    /// Pools datapoints across days.
    pub fn extend(&mut self, other: ImpactDataset) {
        self.points.extend(other.points);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n + 1` evenly spaced integer boundaries from `start` to `end`.
pub fn uniform_boundaries(start: i64, end: i64, n: usize) -> Result<Vec<i64>> {
    if n == 0 || end <= start {
        return Err(CapacityError::InvalidParameter(format!(
            "need n >= 1 intervals over a nonempty session, got n = {n}, [{start}, {end}]"
        )));
    }
    let span = (end - start) as i128;
    Ok((0..=n as i128).map(|i| start + (span * i / n as i128) as i64).collect())
}

/// Midquote in force at each boundary.
pub fn boundary_midquotes(day: &TickDay, boundaries: &[i64]) -> Result<Vec<f64>> {
    boundaries
        .iter()
        .map(|&t| day.midquote_at(t).ok_or(CapacityError::MissingBoundaryQuote(t)))
        .collect()
}

/// Splits the session into `n_intervals` equal intervals.
pub fn interval_aggregate(day: &TickDay, n_intervals: usize, mode: WeightMode) -> Result<ImpactDataset> {
    let b = uniform_boundaries(0, day.session_close, n_intervals)?;
    interval_aggregate_with_boundaries(day, &b, mode)
}

/// Per interval `[T_{i-1}, T_i)`: `V_i = sum_a W_ia V_ia`, `U_i = M_i - M_{i-1}`.
pub fn interval_aggregate_with_boundaries(
    day: &TickDay,
    boundaries: &[i64],
    mode: WeightMode,
) -> Result<ImpactDataset> {
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CapacityError::InvalidParameter(
            "boundaries must be strictly increasing with at least one interval".into(),
        ));
    }
    let mids = boundary_midquotes(day, boundaries)?;
    let weights = classify_prints(day, mode);
    let mut volume = vec![0.0; boundaries.len() - 1];
    for pw in &weights {
        let Some(w) = pw.weight else { continue };
        let k = boundaries.partition_point(|&t| t <= pw.time);
        if k == 0 || k == boundaries.len() {
            continue;
        }
        volume[k - 1] += w * pw.volume;
    }
    let points = volume
        .into_iter()
        .enumerate()
        .map(|(i, v)| ImpactPoint {
            volume: v,
            price_change: mids[i + 1] - mids[i],
        })
        .collect();
    Ok(ImpactDataset { points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactFit {
    /// Impact power `n = 1 + slope`.
    pub n: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Datapoints retained after filtering.
    pub points: usize,
}

/// Least-squares fit of `ln|U| ~ ln|V|` with an intercept over points with
/// `sign(U) = sign(V)` and both nonzero; `n = 1 + slope`.
pub fn estimate_impact_power(data: &ImpactDataset) -> Result<ImpactFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = data
        .points
        .iter()
        .filter(|p| p.volume != 0.0 && p.price_change != 0.0 && p.volume.signum() == p.price_change.signum())
        .map(|p| (p.volume.abs().ln(), p.price_change.abs().ln()))
        .unzip();
    let k = xs.len();
    if k < MIN_IMPACT_POINTS {
        return Err(CapacityError::InsufficientData(format!(
            "{k} usable impact points, need {MIN_IMPACT_POINTS}"
        )));
    }
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = ys.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(CapacityError::DegenerateDesign("all |V| are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(ImpactFit {
        n: 1.0 + slope,
        slope,
        intercept,
        r_squared,
        points: k,
    })
}

/// Realized cost `C` and dollars `D` traded over one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecPoint {
    pub cost: f64,
    pub dollars: f64,
}

/// `C_i = sum_a V_ia (F_ia - M_{i-1})`, `D_i = M_{i-1} |sum_a V_ia|` for each
/// interval that has fills. `midquotes[i]` is the midquote at
/// `boundaries[i]`.
pub fn execution_costs(fills: &[Fill], boundaries: &[i64], midquotes: &[f64]) -> Result<Vec<ExecPoint>> {
    if boundaries.len() < 2 || midquotes.len() != boundaries.len() {
        return Err(CapacityError::InvalidParameter(
            "need one midquote per boundary and at least one interval".into(),
        ));
    }
    let n = boundaries.len() - 1;
    let mut cost = vec![0.0; n];
    let mut shares = vec![0.0; n];
    let mut touched = vec![false; n];
    for f in fills {
        let k = boundaries.partition_point(|&t| t <= f.time);
        if k == 0 || k == boundaries.len() {
            continue;
        }
        let i = k - 1;
        cost[i] += f.shares * (f.price - midquotes[i]);
        shares[i] += f.shares;
        touched[i] = true;
    }
    Ok((0..n)
        .filter(|&i| touched[i])
        .map(|i| ExecPoint {
            cost: cost[i],
            dollars: midquotes[i] * shares[i].abs(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuFit {
    /// Linear slippage `L`.
    pub l: f64,
    /// Impact coefficient `Q = nu * Q~`.
    pub q: f64,
    pub nu: f64,
    pub rss: f64,
    /// Residual sum of squares for every grid value.
    pub grid_rss: Vec<(f64, f64)>,
    /// False when the residuals do not discriminate between grid values.
    pub nu_identified: bool,
    pub points: usize,
}

/// `{1.1, 1.2, ..., 3.0}`.
pub fn default_nu_grid() -> Vec<f64> {
    let steps = ((DEFAULT_NU_GRID_MAX - DEFAULT_NU_GRID_MIN) / DEFAULT_NU_GRID_STEP).round() as i64;
    (0..=steps)
        .map(|k| ((DEFAULT_NU_GRID_MIN / DEFAULT_NU_GRID_STEP).round() as i64 + k) as f64 * DEFAULT_NU_GRID_STEP)
        .map(|x| (x * 1e12).round() / 1e12)
        .collect()
}

/// For each `nu`, fits `C ~ L D + Q~ D^nu` without an intercept and keeps
/// the `nu` with the smallest residual sum of squares.
pub fn estimate_nu(points: &[ExecPoint], nu_grid: &[f64]) -> Result<NuFit> {
    if nu_grid.is_empty() {
        return Err(CapacityError::InvalidParameter("empty nu grid".into()));
    }
    if let Some(bad) = nu_grid.iter().find(|&&v| !(v > 1.0 && v.is_finite())) {
        return Err(CapacityError::InvalidParameter(format!("grid value {bad} must exceed 1")));
    }
    let usable: Vec<&ExecPoint> = points.iter().filter(|p| p.dollars > 0.0).collect();
    let k = usable.len();
    if k < MIN_EXEC_POINTS {
        return Err(CapacityError::InsufficientData(format!(
            "{k} intervals with positive dollars, need {MIN_EXEC_POINTS}"
        )));
    }
    let d0 = usable[0].dollars;
    if usable.iter().all(|p| p.dollars == d0) {
        return Err(CapacityError::DegenerateDesign("all D are equal".into()));
    }
    let c = DVector::from_iterator(k, usable.iter().map(|p| p.cost));
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let mut grid_rss = Vec::with_capacity(nu_grid.len());
    for &nu in nu_grid {
        let (l, qt, rss) = fit_linear_power(&usable, &c, nu)?;
        grid_rss.push((nu, rss));
        if best.is_none_or(|b| rss < b.3) {
            best = Some((nu, l, qt, rss));
        }
    }
    let (nu, l, qt, rss) = best.expect("grid is nonempty");
    let lo = grid_rss.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
    let hi = grid_rss.iter().map(|g| g.1).fold(0.0f64, f64::max);
    let nu_identified = nu_grid.len() > 1 && hi - lo > 1e-12 * c.norm_squared();
    Ok(NuFit {
        l,
        q: nu * qt,
        nu,
        rss,
        grid_rss,
        nu_identified,
        points: k,
    })
}

/// Least squares on the two columns `D` and `D^nu`, each scaled to unit norm
/// before the QR solve.
fn fit_linear_power(points: &[&ExecPoint], c: &DVector<f64>, nu: f64) -> Result<(f64, f64, f64)> {
    let k = points.len();
    let d = DVector::from_iterator(k, points.iter().map(|p| p.dollars));
    let dn = d.map(|x| x.powf(nu));
    let (s1, s2) = (d.norm(), dn.norm());
    let design = DMatrix::from_columns(&[&d / s1, &dn / s2]);
    let qr = design.clone().qr();
    let r = qr.r();
    if r[(1, 1)].abs() <= 1e-13 * r[(0, 0)].abs() {
        return Err(CapacityError::DegenerateDesign(format!("D and D^{nu} are collinear")));
    }
    let qtc = qr.q().transpose() * c;
    let coef = r
        .solve_upper_triangular(&qtc)
        .ok_or_else(|| CapacityError::DegenerateDesign("singular design".into()))?;
    let resid = c - &design * &coef;
    Ok((coef[0] / s1, coef[1] / s2, resid.norm_squared()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerAggregate {
    Median,
    WeightedMean(Vec<f64>),
}

/// Combines per-stock impact powers into a portfolio value.
pub fn aggregate_powers(values: &[f64], how: &PowerAggregate) -> Result<f64> {
    if values.is_empty() {
        return Err(CapacityError::InsufficientData("no per-stock powers".into()));
    }
    match how {
        PowerAggregate::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
        }
        PowerAggregate::WeightedMean(w) => {
            if w.len() != values.len() || w.iter().any(|&x| x < 0.0) {
                return Err(CapacityError::InvalidParameter("weights must be nonnegative, one per value".into()));
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(CapacityError::InvalidParameter("weights sum to zero".into()));
            }
            Ok(values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Print, Quote};
    use approx::assert_relative_eq;

    fn day(prints: &[(i64, f64, f64)], quotes: &[(i64, f64, f64)]) -> TickDay {
        TickDay::with_session(
            prints.iter().map(|&(time, price, volume)| Print { time, price, volume }).collect(),
            quotes.iter().map(|&(time, bid, ask)| Quote { time, bid, ask }).collect(),
            100,
        )
        .unwrap()
    }

    #[test]
    fn print_weights() {
        let d = day(
            &[(1, 100.02, 1.0), (2, 100.0, 1.0), (3, 100.05, 1.0), (4, 99.98, 1.0), (5, 100.01, 1.0)],
            &[(0, 99.98, 100.02)],
        );
        let w: Vec<f64> = classify_prints(&d, WeightMode::Full).iter().map(|p| p.weight.unwrap()).collect();
        assert_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], 0.0, epsilon = 1e-9);
        assert_eq!(w[2], 1.0);
        assert_eq!(w[3], -1.0);
        assert_relative_eq!(w[4], 0.5, epsilon = 1e-9);
        let s: Vec<f64> = classify_prints(&d, WeightMode::Sign).iter().map(|p| p.weight.unwrap()).collect();
        assert_eq!(s[4], 1.0);
    }

    #[test]
    fn crossed_markets_excluded() {
        let d = day(&[(1, 100.0, 1.0), (6, 100.0, 1.0)], &[(0, 100.0, 100.0), (5, 100.1, 99.9)]);
        assert!(classify_prints(&d, WeightMode::Full).iter().all(|p| p.weight.is_none()));
    }

    #[test]
    fn single_interval_midquote_change() {
        let d = day(&[], &[(0, 99.5, 100.5), (100, 100.5, 101.5)]);
        let ds = interval_aggregate(&d, 1, WeightMode::Full).unwrap();
        assert_eq!(ds.points, vec![ImpactPoint { volume: 0.0, price_change: 1.0 }]);
    }

    #[test]
    fn prints_at_ask_sum_volume() {
        let d = day(&[(10, 100.01, 100.0), (20, 100.01, 200.0), (30, 100.0, 50.0)], &[(0, 99.99, 100.01)]);
        let ds = interval_aggregate(&d, 1, WeightMode::Full).unwrap();
        assert_relative_eq!(ds.points[0].volume, 300.0, epsilon = 1e-9);
        let mid_only = day(&[(10, 100.0, 100.0)], &[(0, 99.99, 100.01)]);
        let ds = interval_aggregate(&mid_only, 1, WeightMode::Full).unwrap();
        assert_relative_eq!(ds.points[0].volume, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn missing_boundary_quote() {
        let d = day(&[], &[(10, 99.0, 101.0)]);
        assert_eq!(
            interval_aggregate(&d, 2, WeightMode::Full),
            Err(CapacityError::MissingBoundaryQuote(0))
        );
    }

    #[test]
    fn custom_boundaries() {
        let d = day(&[(5, 101.0, 10.0), (50, 99.0, 20.0)], &[(0, 99.0, 101.0), (10, 99.5, 101.5)]);
        let ds = interval_aggregate_with_boundaries(&d, &[0, 10, 100], WeightMode::Full).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.points[0].volume, 10.0);
        assert_relative_eq!(ds.points[0].price_change, 0.5, epsilon = 1e-12);
        assert_eq!(ds.points[1].volume, -20.0);
    }

    #[test]
    fn exact_power_law() {
        let points = (1..=40)
            .map(|k| {
                let v = if k % 2 == 0 { 1.0 } else { -1.0 } * (k as f64 * 37.0);
                ImpactPoint {
                    volume: v,
                    price_change: v.signum() * v.abs().powf(0.5),
                }
            })
            .collect();
        let fit = estimate_impact_power(&ImpactDataset { points }).unwrap();
        assert_relative_eq!(fit.n, 1.5, epsilon = 1e-10);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sign_filter_can_empty_the_regression() {
        let points = (1..=20)
            .map(|k| ImpactPoint {
                volume: k as f64,
                price_change: -(k as f64),
            })
            .collect();
        assert!(matches!(
            estimate_impact_power(&ImpactDataset { points }),
            Err(CapacityError::InsufficientData(_))
        ));
    }

    #[test]
    fn execution_cost_examples() {
        let b = [0, 10, 20];
        let m = [100.0, 100.0, 100.0];
        let at_mid = [Fill { time: 1, price: 100.0, shares: 50.0 }];
        assert_eq!(execution_costs(&at_mid, &b, &m).unwrap()[0].cost, 0.0);
        let buy = [Fill { time: 1, price: 100.01, shares: 100.0 }];
        assert_relative_eq!(execution_costs(&buy, &b, &m).unwrap()[0].cost, 1.0, epsilon = 1e-10);
        let flat = [
            Fill { time: 11, price: 100.02, shares: 30.0 },
            Fill { time: 12, price: 99.98, shares: -30.0 },
        ];
        let pts = execution_costs(&flat, &b, &m).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].dollars, 0.0);
    }

    fn planted(l: f64, q: f64, nu: f64) -> Vec<ExecPoint> {
        (1..=30)
            .map(|k| {
                let d = 1000.0 * k as f64;
                ExecPoint {
                    cost: l * d + q / nu * d.powf(nu),
                    dollars: d,
                }
            })
            .collect()
    }

    #[test]
    fn nu_scan_recovers_planted_model() {
        let fit = estimate_nu(&planted(0.001, 0.002, 1.5), &default_nu_grid()).unwrap();
        assert_eq!(fit.nu, 1.5);
        assert_relative_eq!(fit.l, 0.001, max_relative = 1e-8);
        assert_relative_eq!(fit.q, 0.002, max_relative = 1e-8);
        assert!(fit.nu_identified);
    }

    #[test]
    fn linear_only_costs_flag_nu() {
        let fit = estimate_nu(&planted(0.001, 0.0, 1.5), &default_nu_grid()).unwrap();
        assert_relative_eq!(fit.l, 0.001, max_relative = 1e-8);
        assert!(!fit.nu_identified);
    }

    #[test]
    fn singleton_grid_and_degenerate_inputs() {
        let fit = estimate_nu(&planted(0.001, 0.002, 2.0), &[1.5]).unwrap();
        assert_eq!(fit.nu, 1.5);
        let same: Vec<ExecPoint> = (0..5).map(|_| ExecPoint { cost: 1.0, dollars: 10.0 }).collect();
        assert!(matches!(estimate_nu(&same, &[1.5]), Err(CapacityError::DegenerateDesign(_))));
        assert!(matches!(estimate_nu(&same[..2], &[1.5]), Err(CapacityError::InsufficientData(_))));
    }

    #[test]
    fn default_grid_values() {
        let g = default_nu_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 1.1);
        assert_eq!(g[4], 1.5);
        assert_eq!(*g.last().unwrap(), 3.0);
    }

    #[test]
    fn power_aggregation() {
        assert_eq!(aggregate_powers(&[1.4, 1.9, 1.5], &PowerAggregate::Median).unwrap(), 1.5);
        let w = aggregate_powers(&[1.4, 1.6], &PowerAggregate::WeightedMean(vec![1.0, 3.0])).unwrap();
        assert_relative_eq!(w, 1.55, epsilon = 1e-15);
    }
}
