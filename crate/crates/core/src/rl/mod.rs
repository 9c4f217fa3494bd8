//! Replay buffer, Adam, target networks, and the actor–critic training
//! loop for the baseline and the YANN-initialized agent.

mod adam;
mod agent;
mod buffer;
mod train;
mod update;

pub use adam::Adam;
pub use agent::{
    build_design, build_yann_critic_for, build_yann_policy, derive_seed, Agent, AgentConfig,
    AgentKind, Design, Policy,
};
pub use buffer::{ReplayBuffer, Transition};
pub use train::{
    evaluate, rollout, train, train_with, EpisodeLog, EpisodeResult, EpisodeSet, TrainingLog,
};
pub use update::{actor_update, critic_update, polyak, td_target};
