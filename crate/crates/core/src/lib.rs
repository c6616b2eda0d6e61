//! Cooperative multi-agent reinforcement-learning benchmark suite.
//!
//! The crate bundles three families of cooperative environments (repeated
//! matrix games, level-based foraging and a multi-robot warehouse), a small
//! reverse-mode autodiff engine, nine multi-agent trainers built on top of it,
//! and an evaluation harness that reproduces the standard benchmark protocol
//! (periodic evaluation, maximum/average returns, normalisation, grid search
//! and simulator throughput).

pub mod algorithms;
pub mod autodiff;
pub mod cli;
pub mod env;
pub mod harness;
pub mod rng;
pub mod task;

pub use env::{
    ActionSpace, EnvError, JointAction, JointObservation, MultiAgentEnv, ObservationSpace,
    StepResult,
};
pub use task::{ParseError, TaskSpec};

/// Version string shared with the C ABI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
