//! Run configuration, the `yann` subcommands, and their reports.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod verify;

pub use commands::{
    cmd_benchmark, cmd_design, cmd_evaluate, cmd_net_eval, cmd_pwa_eval, cmd_train, cmd_verify, Run,
};
pub use config::RunConfig;
pub use error::{CliError, Result};
