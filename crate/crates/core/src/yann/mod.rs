//! Layered networks with per-parameter trainable masks, and the
//! constructions built on them: the exact PWA network, zero-initialized
//! blocks, and the YANN actor and critic.

mod actor;
mod critic;
mod exact;
mod mlp;
mod network;
mod zero;

pub use actor::{
    build_yann_actor, build_yann_actor_with, suppression_headroom, zero_block_label, ActorOptions,
};
pub use critic::{build_yann_critic, build_yann_critic_scaled, quadratic_q_matrix};
pub use exact::{
    big_m, build_exact_yann, build_exact_yann_with, law_bound_over, region_binaries, FACET_EPS,
};
pub use mlp::build_mlp;
pub use network::{
    Activation, Affine, Gradients, Network, NetworkBuilder, Node, Op, ParamCount, SCHEMA_VERSION,
};
pub use zero::{build_zero_block, ZeroBlockSpec};
