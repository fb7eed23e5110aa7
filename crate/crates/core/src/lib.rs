//! Risk-aware multi-robot active target tracking.
//!
//! A team of robots plans one-step controls that minimize the trace of the
//! team's target-position covariance while keeping the probability of
//! entering uncertain sensing danger zones, or being jammed near uncertain
//! communication danger zones, below configured risk levels.
//!
//! * [`chance`]: Gaussian chance constraints reduced to deterministic
//!   inequalities, plus Monte-Carlo disk probabilities for auditing them.
//! * [`estimation`]: range/bearing sensing and the EKF whose covariance trace
//!   is the tracking objective.
//! * [`planner`]: the per-step constrained program, its augmented-Lagrangian
//!   solver, and escape control.
//! * [`sim`]: the closed-loop simulator and sampled risk metrics.
//! * [`io`]: scenario files, run logs and the command line.

pub mod chance;
pub mod error;
pub mod estimation;
pub mod io;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};
