//! Factor risk models, Sharpe-optimal allocation and capacity estimates for
//! portfolios of alpha streams.

pub mod allocation;
pub mod cli;
pub mod capacity;
pub mod covariance;
pub mod factor_model;
pub mod ingest;
pub mod output;
pub mod synthetic;
