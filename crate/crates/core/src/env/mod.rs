//! The multi-agent environment contract shared by every simulator.
//!
//! An environment is reset with an explicit 64-bit seed and stepped with one
//! discrete action per agent. All tasks in this crate are fully cooperative:
//! every agent receives the same done flag, and the harness treats an episode
//! as finished once all flags are set.

use std::collections::BTreeMap;

use thiserror::Error;

pub mod lbf;
pub mod matrix;
pub mod rware;
pub mod vector;

pub use lbf::{LbfConfig, LevelBasedForaging, Sight};
pub use matrix::{MatrixGame, PayoffMatrix};
pub use rware::{RobotWarehouse, RwareConfig, WarehouseSize};
pub use vector::{run_vectorized, VecEnv};

/// Info key: steps elapsed in the current episode.
pub const INFO_EPISODE_STEP: &str = "episode_step";
/// Info key: 1.0 when the episode ended because the clock hit its limit.
pub const INFO_TRUNCATED: &str = "truncated";
/// Info key: cumulative deliveries in the warehouse.
pub const INFO_DELIVERIES: &str = "deliveries";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("action {action} of agent {agent} is outside [0, {size})")]
    ActionOutOfRange {
        agent: usize,
        action: usize,
        size: usize,
    },
    #[error("step called on a finished episode; reset first")]
    EpisodeFinished,
    #[error("step called before reset")]
    NotReset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("could not place entities: {0}")]
    Spawn(String),
    #[error("environment {index}: {source}")]
    Worker {
        index: usize,
        #[source]
        source: Box<EnvError>,
    },
}

/// Number of discrete actions available to each agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    per_agent_sizes: Vec<usize>,
}

impl ActionSpace {
    pub fn new(per_agent_sizes: Vec<usize>) -> Result<Self, EnvError> {
        if per_agent_sizes.is_empty() || per_agent_sizes.iter().any(|&n| n == 0) {
            return Err(EnvError::Config(
                "action space needs at least one agent and one action per agent".into(),
            ));
        }
        Ok(Self { per_agent_sizes })
    }

    pub fn uniform(n_agents: usize, n_actions: usize) -> Self {
        Self::new(vec![n_actions; n_agents]).expect("uniform action space")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.per_agent_sizes
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent_sizes.len()
    }

    pub fn max_size(&self) -> usize {
        self.per_agent_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> JointAction {
        self.per_agent_sizes
            .iter()
            .map(|&n| rng.gen_range(0..n))
            .collect()
    }

    pub fn validate(&self, actions: &[usize]) -> Result<(), EnvError> {
        if actions.len() != self.per_agent_sizes.len() {
            return Err(EnvError::ActionCount {
                expected: self.per_agent_sizes.len(),
                got: actions.len(),
            });
        }
        for (agent, (&action, &size)) in actions.iter().zip(&self.per_agent_sizes).enumerate() {
            if action >= size {
                return Err(EnvError::ActionOutOfRange {
                    agent,
                    action,
                    size,
                });
            }
        }
        Ok(())
    }
}

/// Flat observation length of each agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSpace {
    per_agent_dims: Vec<usize>,
}

impl ObservationSpace {
    pub fn new(per_agent_dims: Vec<usize>) -> Self {
        Self { per_agent_dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.per_agent_dims
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent_dims.len()
    }

    pub fn max_dim(&self) -> usize {
        self.per_agent_dims.iter().copied().max().unwrap_or(0)
    }

    pub fn contains(&self, obs: &JointObservation) -> bool {
        obs.per_agent.len() == self.per_agent_dims.len()
            && obs
                .per_agent
                .iter()
                .zip(&self.per_agent_dims)
                .all(|(o, &d)| o.len() == d)
    }
}

pub type JointAction = Vec<usize>;

/// One observation vector per agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointObservation {
    pub per_agent: Vec<Vec<f32>>,
}

impl JointObservation {
    pub fn new(per_agent: Vec<Vec<f32>>) -> Self {
        Self { per_agent }
    }

    pub fn n_agents(&self) -> usize {
        self.per_agent.len()
    }

    /// Concatenation of all agents' observations, used as the global state.
    pub fn concat(&self) -> Vec<f32> {
        self.per_agent.iter().flatten().copied().collect()
    }
}

pub type Info = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_obs: JointObservation,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub info: Info,
}

impl StepResult {
    pub fn all_done(&self) -> bool {
        self.dones.iter().all(|&d| d)
    }

    pub fn team_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// True when the episode ended on the time limit rather than a terminal state.
    pub fn truncated(&self) -> bool {
        self.info.get(INFO_TRUNCATED).copied().unwrap_or(0.0) > 0.5
    }

    pub fn terminated(&self) -> bool {
        self.all_done() && !self.truncated()
    }
}

/// Step counter with a hard episode limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeClock {
    t: usize,
    limit: usize,
}

impl EpisodeClock {
    pub fn new(limit: usize) -> Result<Self, EnvError> {
        if limit == 0 {
            return Err(EnvError::Config("time limit must be positive".into()));
        }
        Ok(Self { t: 0, limit })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn reset(&mut self) {
        self.t = 0;
    }

    /// Advances one tick; returns true when the limit has been reached.
    pub fn tick(&mut self) -> bool {
        debug_assert!(self.t < self.limit);
        self.t += 1;
        self.t >= self.limit
    }

    pub fn expired(&self) -> bool {
        self.t >= self.limit
    }
}

/// Lifecycle bookkeeping shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    Fresh,
    Running,
    Finished,
}

impl Phase {
    pub(crate) fn check_step(self) -> Result<(), EnvError> {
        match self {
            Phase::Fresh => Err(EnvError::NotReset),
            Phase::Running => Ok(()),
            Phase::Finished => Err(EnvError::EpisodeFinished),
        }
    }
}

pub(crate) fn step_info(clock: &EpisodeClock, truncated: bool) -> Info {
    let mut info = Info::new();
    info.insert(INFO_EPISODE_STEP.to_string(), clock.t() as f64);
    info.insert(INFO_TRUNCATED.to_string(), if truncated { 1.0 } else { 0.0 });
    info
}

/// A cooperative multi-agent environment with discrete actions.
pub trait MultiAgentEnv: Send {
    fn name(&self) -> String;

    fn n_agents(&self) -> usize {
        self.action_space().n_agents()
    }

    fn action_space(&self) -> &ActionSpace;

    fn observation_space(&self) -> &ObservationSpace;

    fn time_limit(&self) -> usize;

    /// Starts a new episode whose initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Result<JointObservation, EnvError>;

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError>;

    /// The scalar the team optimises and is evaluated on. Defaults to the sum
    /// of the per-agent rewards.
    fn team_reward(&self, rewards: &[f64]) -> f64 {
        rewards.iter().sum()
    }

    /// Plain-text rendering of the current state.
    fn render(&self) -> String {
        String::new()
    }
}

impl MultiAgentEnv for Box<dyn MultiAgentEnv> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn action_space(&self) -> &ActionSpace {
        (**self).action_space()
    }
    fn observation_space(&self) -> &ObservationSpace {
        (**self).observation_space()
    }
    fn time_limit(&self) -> usize {
        (**self).time_limit()
    }
    fn reset(&mut self, seed: u64) -> Result<JointObservation, EnvError> {
        (**self).reset(seed)
    }
    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        (**self).step(actions)
    }
    fn team_reward(&self, rewards: &[f64]) -> f64 {
        (**self).team_reward(rewards)
    }
    fn render(&self) -> String {
        (**self).render()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_space_rejects_empty_and_zero() {
        assert!(ActionSpace::new(vec![]).is_err());
        assert!(ActionSpace::new(vec![3, 0]).is_err());
    }

    #[test]
    fn validate_reports_agent_and_size() {
        let space = ActionSpace::uniform(2, 3);
        assert_eq!(
            space.validate(&[0, 3]),
            Err(EnvError::ActionOutOfRange {
                agent: 1,
                action: 3,
                size: 3
            })
        );
        assert_eq!(
            space.validate(&[0]),
            Err(EnvError::ActionCount {
                expected: 2,
                got: 1
            })
        );
        assert!(space.validate(&[2, 0]).is_ok());
    }

    #[test]
    fn clock_expires_at_limit() {
        let mut clock = EpisodeClock::new(3).unwrap();
        assert!(!clock.tick());
        assert!(!clock.tick());
        assert!(clock.tick());
        assert!(clock.expired());
        clock.reset();
        assert_eq!(clock.t(), 0);
        assert!(EpisodeClock::new(0).is_err());
    }
}
