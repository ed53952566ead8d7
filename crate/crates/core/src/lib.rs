//! Pathwise Itô integration along stopping-time partitions.
//!
//! Given an integrator path `omega` and an integrand `phi`, level `n` cuts
//! time at the successive moments where either of them has moved by `2^-n`
//! since the previous cut. The Riemann-type sums along these partitions
//! converge uniformly for typical paths, without any probability model.
//!
//! - [`paths`]: sampled paths, generators, jump and predictability envelopes
//! - [`partition`]: the level-`n` stopping times in the continuous, càdlàg
//!   and predictable regimes
//! - [`integral`]: integral and quadratic-variation approximants,
//!   convergence reports, Itô-formula residuals
//! - [`betting`]: the discrete (super)martingales and the capital processes
//!   behind the convergence argument
//! - [`dimension`]: oscillation covers and the path-adapted box dimension
//! - [`cli`]: the `pathwise-ito` command line

// `!(x > 0.0)` is the NaN-rejecting form of the checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod betting;
pub mod cli;
pub mod dimension;
pub mod error;
pub mod integral;
pub mod partition;
pub mod paths;

pub(crate) mod sum;

pub use error::{Error, Result};
