//! Explicit model predictive control compiled into exact piecewise-affine
//! networks, and actor-critic training initialized from those networks.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`numerics`]: dense linear algebra, LP/QP, Riccati and ZOH.
//! * [`linctl`]: linear models, MPC assembly and condensation to an mp-QP.
//! * [`mpqp`]: the explicit (piecewise-affine) solution of the mp-QP.
//! * [`yann`]: layered networks that evaluate that solution exactly, plus
//!   zero-initialized trainable blocks, actor and critic.
//! * [`envs`]: nonlinear pendulum and reactor simulators.
//! * [`rl`]: replay buffer, Adam, and the DDPG / YANN-DDPG loops.

pub mod envs;
pub mod error;
pub mod linctl;
pub mod mpqp;
pub mod numerics;
pub mod rl;
pub mod yann;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
