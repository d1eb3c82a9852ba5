//! Robust growth-optimal portfolios on the market-weight simplex.
//!
//! The library takes a market model, given by an instantaneous covariance
//! matrix `c(x)` for the market weights and an invariant density `p(x)`,
//! and computes growth-optimal trading strategies under drift
//! uncertainty:
//!
//! * [`portfolio::unconstrained_optimum`]: the closed-form unconstrained
//!   optimum available for the tractable product covariance class,
//! * [`portfolio::solve_two_asset_long_only`]: the explicit long-only
//!   feedback solution for two assets,
//! * [`qp`]: a finite-dimensional quadratic-programming approximation of
//!   the long-only optimum over concave generating functions,
//! * [`sim`]: an SDE simulator for the worst-case market dynamics that
//!   verifies attained growth rates against the theoretical values.
//!
//! Monte Carlo estimators and samplers partition work into independently
//! seeded streams, so results are bit-identical for any thread count. The
//! `parallel` feature (on by default) runs those streams on rayon; without
//! it everything falls back to sequential execution.

pub mod error;
pub mod exec;
pub mod mc;
pub mod model;
pub mod portfolio;
pub mod qp;
pub mod quad;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
pub use simplex::{RankVector, SimplexPoint, TangentVector};
