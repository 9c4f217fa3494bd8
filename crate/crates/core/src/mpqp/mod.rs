//! Explicit solution of the condensed mp-QP as a piecewise-affine law, and
//! point location over it.

mod pwa;
mod solver;

pub use pwa::{evaluate_pwa, locate_region, CriticalRegion, FacetRole, PwaFunction, LOCATE_TOL};
pub use solver::{solve_mpqp, solve_mpqp_with, MpQpOptions, MpQpReport};
