//! Conic relaxations for low-rank matrix optimization.
//!
//! The crate evaluates scalar and matrix perspective functions, builds
//! semidefinite relaxations of low-rank estimation problems (reduced-rank
//! regression, matrix/tensor completion, nonnegative factorization, factor
//! analysis, rank-k approximation), solves them with an internal
//! operator-splitting conic solver, certifies heuristic solutions with
//! duality gaps, and exposes membership oracles and cut generators for the
//! convex hulls of low-rank spectral sets.

pub mod algos;
pub mod conic;
pub mod cuts;
pub mod error;
pub mod hulls;
pub mod models;
pub mod perspective;
pub mod specfun;

pub use error::{Error, Result};
