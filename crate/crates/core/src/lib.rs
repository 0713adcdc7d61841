//! Simulation and verification toolkit for the eigenstructure of sample
//! covariance matrices of heavy-tailed multivariate stochastic volatility models.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod field;
pub mod io;
pub mod model;
pub mod numeric;
pub mod panel;
pub mod products;
pub mod rng;
pub mod spectrum;
pub mod tail;

pub use error::{Error, Result};
