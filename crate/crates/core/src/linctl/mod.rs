//! Linear models, Jacobian linearization, MPC assembly and condensation
//! into a multi-parametric QP.

mod condense;
mod jacobian;
mod mpc;

pub use condense::{condense, MpQpProblem};
pub use jacobian::{
    finite_difference_jacobian, jacobian_linearize, ContinuousDynamics, FnDynamics,
};
pub use mpc::{build_mpc, build_mpc_with, LinearSystem, MpcProblem, TerminalConstraint};
