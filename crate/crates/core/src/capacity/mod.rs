//! Capacity of an alpha portfolio under power-law impact, and empirical
//! estimation of the impact power from tick data.
//!
//! With dollars traded `D = I T`, the P&L is
//! `P(I) = T (M~ I - Q T^{n-1} I^n / n)` where `M~ = alpha / T - L` is the
//! effective margin. It peaks at the capacity `I*`.

mod impact;

pub use impact::{
    aggregate_powers, boundary_midquotes, classify_prints, default_nu_grid, estimate_impact_power, estimate_nu,
    execution_costs, interval_aggregate, interval_aggregate_with_boundaries, uniform_boundaries, ExecPoint,
    ImpactDataset, ImpactFit, ImpactPoint, NuFit, PowerAggregate, PrintWeight, WeightMode, DEFAULT_NU_GRID_MAX,
    DEFAULT_NU_GRID_MIN, DEFAULT_NU_GRID_STEP, MIN_EXEC_POINTS, MIN_IMPACT_POINTS,
};

use thiserror::Error;

use crate::allocation::Weights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("effective margin must be positive, got {0}")]
    NonpositiveMargin(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("no midquote available at boundary time {0}")]
    MissingBoundaryQuote(i64),
}

pub type Result<T> = std::result::Result<T, CapacityError>;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CapacityError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn power_ok(n: f64) -> Result<()> {
    if n > 1.0 && n.is_finite() {
        Ok(())
    } else {
        Err(CapacityError::InvalidParameter(format!("impact power must exceed 1, got {n}")))
    }
}

fn rho_ok(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(CapacityError::InvalidParameter(format!("rho* must lie in (0, 1], got {rho}")))
    }
}

/// `M~ = alpha / T - L`. Negative margins are returned as is.
pub fn effective_margin(alpha: f64, turnover: f64, linear_cost: f64) -> Result<f64> {
    positive("turnover", turnover)?;
    Ok(alpha / turnover - linear_cost)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityBound {
    /// `I*`
    pub investment: f64,
    /// `P*`
    pub pnl: f64,
    /// `M* = (n-1)/n M~`
    pub margin_at_capacity: f64,
}

/// `I* = (M~/Q)^{1/(n-1)} / T`, `P* = (n-1)/n (M~^n / Q)^{1/(n-1)}`.
pub fn capacity_bound(margin: f64, turnover: f64, impact_coef: f64, power: f64) -> Result<CapacityBound> {
    positive("turnover", turnover)?;
    positive("impact coefficient", impact_coef)?;
    power_ok(power)?;
    if !(margin > 0.0) {
        return Err(CapacityError::NonpositiveMargin(margin));
    }
    let inv = 1.0 / (power - 1.0);
    let factor = (power - 1.0) / power;
    Ok(CapacityBound {
        investment: (margin / impact_coef).powf(inv) / turnover,
        pnl: factor * (margin.powf(power) / impact_coef).powf(inv),
        margin_at_capacity: factor * margin,
    })
}

/// P&L at investment `I`: `T (M~ I - Q T^{n-1} I^n / n)`.
pub fn pnl_at(investment: f64, margin: f64, turnover: f64, impact_coef: f64, power: f64) -> f64 {
    turnover * (margin * investment - impact_coef * turnover.powf(power - 1.0) * investment.powf(power) / power)
}

/// `T = rho* sum_i T_i |w_i|`.
pub fn portfolio_turnover(turnovers: &[f64], w: &Weights, rho_star: f64) -> Result<f64> {
    rho_ok(rho_star)?;
    Ok(rho_star * abs_weighted(turnovers, w)?)
}

/// `sum_i x_i |w_i|`, used for both `tau` and `kappa`.
pub fn abs_weighted(x: &[f64], w: &Weights) -> Result<f64> {
    if x.len() != w.len() {
        return Err(CapacityError::InvalidParameter(format!(
            "{} per-alpha values for {} weights",
            x.len(),
            w.len()
        )));
    }
    Ok(x.iter().zip(w.w.iter()).map(|(a, b)| a * b.abs()).sum())
}

/// Aggregated portfolio inputs for the large-`N` capacity approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioCapacityInputs {
    /// Effective margin `M~`.
    pub margin: f64,
    /// `tau = sum T_i |w_i|`
    pub tau: f64,
    /// `kappa = sum Q_i |w_i|`
    pub kappa: f64,
    pub rho_star: f64,
    pub power: f64,
}

/// `I* ~ (M~/kappa)^{1/(n-1)} / (tau rho*^{n/(n-1)})`, i.e. the capacity
/// bound with `T = rho* tau` and `Q = rho* kappa`.
pub fn portfolio_capacity(inputs: &PortfolioCapacityInputs) -> Result<f64> {
    let PortfolioCapacityInputs {
        margin,
        tau,
        kappa,
        rho_star,
        power,
    } = *inputs;
    positive("tau", tau)?;
    positive("kappa", kappa)?;
    rho_ok(rho_star)?;
    power_ok(power)?;
    if !(margin > 0.0) {
        return Err(CapacityError::NonpositiveMargin(margin));
    }
    let inv = 1.0 / (power - 1.0);
    Ok((margin / kappa).powf(inv) / (tau * rho_star.powf(power * inv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn margin_examples() {
        assert_relative_eq!(effective_margin(0.02, 1.0, 0.005).unwrap(), 0.015, epsilon = 1e-15);
        assert_eq!(effective_margin(0.02, 2.0, 0.0).unwrap(), 0.01);
        assert_eq!(effective_margin(0.01, 2.0, 0.005).unwrap(), 0.0);
        assert!(effective_margin(0.01, 0.0, 0.0).is_err());
    }

    #[test]
    fn three_halves_closed_forms() {
        let (m, t, q) = (0.02, 0.7, 0.003);
        let b = capacity_bound(m, t, q, 1.5).unwrap();
        assert_relative_eq!(b.margin_at_capacity, m / 3.0, max_relative = 1e-14);
        assert_relative_eq!(b.investment, m * m / (t * q * q), max_relative = 1e-13);
        assert_relative_eq!(b.pnl, m.powi(3) / (3.0 * q * q), max_relative = 1e-13);
    }

    #[test]
    fn plug_in_value() {
        let b = capacity_bound(0.01, 1.0, 0.001, 1.5).unwrap();
        assert_relative_eq!(b.investment, 100.0, max_relative = 1e-13);
        let half = capacity_bound(0.01, 0.5, 0.001, 1.5).unwrap();
        assert_relative_eq!(half.investment, 200.0, max_relative = 1e-13);
    }

    #[test]
    fn nonpositive_margin() {
        assert_eq!(
            capacity_bound(0.0, 1.0, 0.001, 1.5),
            Err(CapacityError::NonpositiveMargin(0.0))
        );
        assert!(capacity_bound(0.01, 1.0, 0.001, 1.0).is_err());
    }

    #[test]
    fn turnover_examples() {
        let uniform = Weights::from_direction(DVector::from_element(4, 1.0)).unwrap();
        let t = [1.0, 2.0, 3.0, 6.0];
        assert_relative_eq!(portfolio_turnover(&t, &uniform, 1.0).unwrap(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(portfolio_turnover(&t, &uniform, 0.5).unwrap(), 1.5, epsilon = 1e-15);
        let one_hot = Weights::from_direction(DVector::from_vec(vec![0.0, 0.0, -2.0, 0.0])).unwrap();
        assert_relative_eq!(portfolio_turnover(&t, &one_hot, 0.4).unwrap(), 1.2, epsilon = 1e-15);
        assert!(portfolio_turnover(&t, &one_hot, 0.0).is_err());
    }

    #[test]
    fn portfolio_capacity_reduces_to_bound() {
        let p = PortfolioCapacityInputs {
            margin: 0.01,
            tau: 0.8,
            kappa: 0.002,
            rho_star: 1.0,
            power: 1.5,
        };
        let b = capacity_bound(0.01, 0.8, 0.002, 1.5).unwrap();
        assert_relative_eq!(portfolio_capacity(&p).unwrap(), b.investment, max_relative = 1e-14);
    }

    #[test]
    fn rho_exponent_for_quadratic_impact() {
        // n = 2: n/(n-1) = 2, so halving rho* quadruples I*.
        let base = PortfolioCapacityInputs {
            margin: 0.01,
            tau: 1.0,
            kappa: 0.001,
            rho_star: 0.6,
            power: 2.0,
        };
        let half = PortfolioCapacityInputs { rho_star: 0.3, ..base };
        let r = portfolio_capacity(&half).unwrap() / portfolio_capacity(&base).unwrap();
        assert_relative_eq!(r, 4.0, max_relative = 1e-13);
    }
}
