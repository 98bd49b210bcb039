//! Forward and inverse solvers for the 1-D variable-exponent p(x)-Laplace
//! conductivity problem.
//!
//! See the crate README for the mathematical setup. In short: on an interval
//! with piecewise-constant exponent p(x) and conductivity γ(x), the forward
//! map sends a Dirichlet boundary gap m to the boundary flux Λ(m) (the
//! Dirichlet-to-Neumann map). From boundary data alone the conductivity is
//! only determined up to the level sets of p; this crate computes both the
//! forward map and the reconstruction of that level-set-averaged
//! conductivity P̃(γ), plus the supporting machinery (fixed points, extremal
//! limits, moment extraction from derivatives of the DN curve, interior-data
//! recovery).

// `!(x > 0.0)`-style guards are kept as written because they also reject NaN,
// which the suggested `partial_cmp` rewrites would silently accept; indexed
// loops are kept where the index is the derivative/moment order the formula
// is stated in.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod combinatorics;
pub mod diff;
pub mod error;
pub mod forward;
pub mod profiles;
pub mod projection;
pub mod recon;

mod interp;
mod rootfind;

pub use error::{Error, Result};
