//! Spectral Faedo-Galerkin solvers for the fourth-order MEMS equations
//!
//!   u_t  + beta Lap^2 u - tau Lap u = lambda / (1 - u)^2,
//!   u_tt + beta Lap^2 u - tau Lap u = lambda / (1 - u)^2,
//!
//! on an interval or a radial ball, together with the Picard solution map,
//! empirical well-posedness certificates and touchdown bounds.

// Negated comparisons are deliberate: they send NaN down the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod error;
pub mod fixed_point;
pub mod galerkin;
pub mod io;
pub mod quench;
pub mod spectrum;

pub use error::{Error, Result};
