//! Liability-tracking portfolio control in the linear-quadratic-Gaussian setting.
//!
//! A pension fund invests in a money market account and `n` risky assets and
//! wants its wealth `X` to follow a benchmark `a(t)* Y`, where `Y` collects `m`
//! liability components (income, expense, ...) with affine dynamics. The
//! quadratic tracking cost has a closed-form optimal feedback control built
//! from a triangular system of backward ODEs.
//!
//! - [`model`]: market, liability and objective definitions.
//! - [`riccati`]: backward RK4 solution of the ODE system, including horizon padding.
//! - [`strategy`]: the optimal feedback control, the value function and simple
//!   comparison policies.
//! - [`simulate`]: seeded Euler-Maruyama Monte Carlo of prices, liability and wealth.
//! - [`metrics`]: hedging error, cost estimates and allocation summaries.
//! - [`calibrate`]: liability models for the artificial and table-driven experiments.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod calibrate;
mod error;
pub mod metrics;
pub mod model;
mod ode;
pub mod riccati;
pub mod simulate;
pub mod strategy;
mod time_fn;

pub use error::{Error, Result};
pub use model::{cholesky_lower, excess_drift, risk_quadratic, FactorOrientation, LiabilityParams, MarketParams, Objective};
pub use riccati::{solve_riccati, stationary_solve, Formulation, RiccatiSolution, SolverOptions};
pub use simulate::{simulate_liability_only, simulate_paths, LiabilityPaths, PathRecord, PathSet, SimConfig, Simulator};
pub use strategy::{benchmark_value, AffineRule, ConstantHoldings, ConstantMix, FeedbackStrategy, Policy};
pub use time_fn::{Lerp, TimeFunction};

pub use nalgebra::{DMatrix, DVector};
