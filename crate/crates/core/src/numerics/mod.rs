//! Dense linear algebra, LP/QP solvers, Riccati iteration and zero-order-hold
//! discretization.

mod expm;
mod lp;
mod matrix;
mod polytope;
mod qp;
mod riccati;

pub use expm::{expm, zoh_discretize};
pub use lp::{lp_solve, lp_solve_with, LpSolution};
pub use matrix::{add, axpy, dot, gemm, norm2, norm_inf, sub, Lu, Matrix};
pub use polytope::{
    chebyshev_ball, remove_redundant, remove_redundant_with, ChebyshevBall, Polytope,
};
pub use qp::{qp_solve, qp_solve_warm, QpSolution};
pub use riccati::{lqr_gain, solve_dare, solve_dare_with, DareSolution};

use serde::{Deserialize, Serialize};

/// Outcome of an LP or QP solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Every numeric tolerance used by the solvers in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Primal feasibility and pivot threshold of the simplex method.
    pub lp: f64,
    /// Simplex pivots before giving up.
    pub lp_max_iter: usize,
    /// KKT stationarity target of the QP solver.
    pub qp: f64,
    pub qp_max_iter: usize,
    /// Convergence threshold on successive Riccati iterates.
    pub dare: f64,
    pub dare_max_iter: usize,
    /// Slack allowed when deciding a row is implied by the others.
    pub redundancy: f64,
    /// Regions with a smaller inscribed ball are treated as lower-dimensional.
    pub min_chebyshev_radius: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lp: 1e-9,
            lp_max_iter: 50_000,
            qp: 1e-8,
            qp_max_iter: 10_000,
            dare: 1e-10,
            dare_max_iter: 100_000,
            redundancy: 1e-9,
            min_chebyshev_radius: 1e-9,
        }
    }
}
