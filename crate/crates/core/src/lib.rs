//! Simulation and numerical verification of central limit behaviour for sums
//! of the largest values of subordinated long-range dependent moving averages.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: coefficients, innovations, marginals and the subordination map.
//! * [`simulate`]: FFT generation of paths and exact second-moment bookkeeping.
//! * [`scaling`]: deterministic normalizing constants and hypothesis checks.
//! * [`estats`]: order-statistic functionals, empirical processes and the
//!   standardized extreme-sum statistic with its three-term decomposition.
//! * [`mc`]: reproducible parallel Monte Carlo and goodness-of-fit summaries.
//! * [`config`]: the flat `key = value` experiment description.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estats;
pub mod mc;
pub mod model;
pub mod quad;
pub mod rng;
pub mod scaling;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
