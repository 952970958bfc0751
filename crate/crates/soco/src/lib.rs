//! Smoothed online convex optimization with noisy predictions.
//!
//! The library models an online tracking problem: at each round `t` pick an
//! action `x_t` and pay `½‖y_t − K x_t‖² + β‖x_t − x_{t−1}‖₁`. Targets are
//! revealed through a colored-noise prediction model in which every
//! prediction error is a weighted sum of i.i.d. innovations, so predictions
//! improve as time passes and errors correlate across horizons.
//!
//! The crate is organized in layers:
//!
//! * [`problem`] — the tracking instance, derived pseudoinverse operators,
//!   and cost evaluation.
//! * [`prediction`] — impulse responses, innovation sampling, realizations,
//!   prediction queries, and the correlation metrics `‖f_w‖²` and `F(w)`
//!   (with Wiener and Kalman instantiations).
//! * [`solver`] — the fused-lasso window subproblem (operator splitting with
//!   a block-tridiagonal quadratic stage), the offline dynamic optimum, the
//!   closed-form static optimum, and brute-force oracles.
//! * [`algorithms`] — FHC, AFHC, OPEN, OPT, STA, and an RHC baseline.
//! * [`analysis`] — performance bounds (V, B, α₁, α₂), the g₁/g₂
//!   suboptimality decomposition, the quadratic-form matrix machinery, and
//!   concentration tail bounds.
//! * [`harness`] — JSON-configured, seeded Monte Carlo experiments with
//!   CSV/JSON persistence, exposed through the `soco` CLI.

pub mod algorithms;
pub mod analysis;
pub mod harness;
pub mod prediction;
pub mod problem;
pub mod rng;
pub mod solver;

mod error;

pub use error::{Error, Result};
pub use problem::{CostBreakdown, DerivedOperators, ProblemSpec, Trajectory};
