//! Differentially private heavy-ball, Nesterov and multi-stage Nesterov methods.
//!
//! The crate is split along the lines of the workflow:
//!
//! * [`privacy`]: Laplace mechanism, subsampled leak function, composition accounting.
//! * [`objectives`]: strongly convex quadratics, ridge-regularised logistic regression,
//!   synthetic data.
//! * [`optimizers`]: DP-GD, DP-(S)HB, DP-NAG and DP-MASG with per-iteration traces.
//! * [`allocation`]: error-bound coefficients and optimal per-iteration noise schedules.
//! * [`certification`]: Lyapunov certificate search and closed-form quadratic bounds.
//! * [`harness`]: experiment configuration, grid runner and summaries.

pub mod allocation;
pub mod certification;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod privacy;

pub use error::{Error, Result};
