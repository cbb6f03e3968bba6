//! Huber-loss empirical risk minimization with an adaptive scale parameter.
//!
//! The crate is organised bottom-up:
//!
//! * [`loss`]: the Huber loss, its derivative, IRLS weights and empirical risk.
//! * [`quadrature`]: adaptive Gauss–Kronrod integration on finite and infinite ranges.
//! * [`distributions`]: noise families, exact samplers, moments and synthetic regression data.
//! * [`hypothesis`]: Gaussian-bump hypothesis spaces, fitted estimators and covering-number estimates.
//! * [`solver`]: IRLS fitting of the empirical Huber risk and the scale schedules.
//! * [`theory`]: population oracles and the comparison, variance, Bernstein and tail bound checks.
//! * [`harness`]: rate sweeps, the bias demonstration, baseline comparators and report output.

pub mod distributions;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod loss;
pub mod quadrature;
pub mod seed;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
