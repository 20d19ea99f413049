//! Bayesian parametric survival models with change-points in the hazard.
//!
//! Segments are Weibull (or exponential) with log-linked scale and shape.
//! Treatment-effect scenarios (delayed effect, loss of effect, converging
//! hazards) are expressed as constraint masks over the per-interval
//! coefficients. Posterior sampling uses adaptive Metropolis-within-Gibbs,
//! and fits are compared by WAIC and restricted mean survival time.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod comparators;
pub mod data;
pub mod error;
pub mod hazard;
pub mod likelihood;
pub mod mcmc;
pub mod predict;
pub mod scenario;
pub mod simstudy;
pub mod special;

pub use error::{Error, Result};
