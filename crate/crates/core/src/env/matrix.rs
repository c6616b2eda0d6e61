//! Repeated two-player common-payoff matrix games.

use super::{
    step_info, ActionSpace, EnvError, EpisodeClock, JointObservation, MultiAgentEnv,
    ObservationSpace, Phase, StepResult,
};

/// Episode length of the repeated games.
pub const MATRIX_EPISODE_LENGTH: usize = 25;
/// Penalty values of the benchmark's penalty-game tasks.
pub const PENALTY_VALUES: [i32; 5] = [0, -25, -50, -75, -100];
/// The fixed observation every agent sees at every step.
pub const CONSTANT_OBSERVATION: [f32; 1] = [1.0];

const CLIMBING: [[f64; 3]; 3] = [[0.0, 6.0, 5.0], [-30.0, 7.0, 0.0], [11.0, -30.0, 0.0]];

/// A 3x3 common-payoff matrix indexed by (row player, column player).
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    entries: [[f64; 3]; 3],
    penalty: Option<f64>,
}

impl PayoffMatrix {
    pub fn climbing() -> Self {
        Self {
            entries: CLIMBING,
            penalty: None,
        }
    }

    pub fn penalty(k: f64) -> Result<Self, EnvError> {
        if k > 0.0 || !k.is_finite() {
            return Err(EnvError::Config(format!("penalty k must be <= 0, got {k}")));
        }
        Ok(Self {
            entries: [[k, 0.0, 10.0], [0.0, 2.0, 0.0], [10.0, 0.0, k]],
            penalty: Some(k),
        })
    }

    pub fn penalty_term(&self) -> Option<f64> {
        self.penalty
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }

    pub fn payoff(&self, a1: usize, a2: usize) -> Result<f64, EnvError> {
        for (agent, &action) in [a1, a2].iter().enumerate() {
            if action >= 3 {
                return Err(EnvError::ActionOutOfRange {
                    agent,
                    action,
                    size: 3,
                });
            }
        }
        Ok(self.entries[a1][a2])
    }
}

pub fn constant_observation(_agent: usize) -> Vec<f32> {
    CONSTANT_OBSERVATION.to_vec()
}

#[derive(Debug, Clone)]
pub struct MatrixGame {
    name: String,
    payoff: PayoffMatrix,
    clock: EpisodeClock,
    phase: Phase,
    action_space: ActionSpace,
    observation_space: ObservationSpace,
}

impl MatrixGame {
    pub fn new(name: impl Into<String>, payoff: PayoffMatrix) -> Self {
        Self {
            name: name.into(),
            payoff,
            clock: EpisodeClock::new(MATRIX_EPISODE_LENGTH).expect("positive limit"),
            phase: Phase::Fresh,
            action_space: ActionSpace::uniform(2, 3),
            observation_space: ObservationSpace::new(vec![CONSTANT_OBSERVATION.len(); 2]),
        }
    }

    pub fn climbing() -> Self {
        Self::new("climbing", PayoffMatrix::climbing())
    }

    pub fn penalty(k: i32) -> Result<Self, EnvError> {
        Ok(Self::new(format!("penalty-k{k}"), PayoffMatrix::penalty(k as f64)?))
    }

    pub fn payoff_matrix(&self) -> &PayoffMatrix {
        &self.payoff
    }

    fn observe(&self) -> JointObservation {
        JointObservation::new((0..2).map(constant_observation).collect())
    }
}

impl MultiAgentEnv for MatrixGame {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    fn observation_space(&self) -> &ObservationSpace {
        &self.observation_space
    }

    fn time_limit(&self) -> usize {
        self.clock.limit()
    }

    fn reset(&mut self, _seed: u64) -> Result<JointObservation, EnvError> {
        self.clock.reset();
        self.phase = Phase::Running;
        Ok(self.observe())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        self.phase.check_step()?;
        self.action_space.validate(actions)?;
        let reward = self.payoff.payoff(actions[0], actions[1])?;
        let done = self.clock.tick();
        if done {
            self.phase = Phase::Finished;
        }
        Ok(StepResult {
            next_obs: self.observe(),
            rewards: vec![reward; 2],
            dones: vec![done; 2],
            info: step_info(&self.clock, done),
        })
    }

    /// Both players receive the same payoff; it is counted once.
    fn team_reward(&self, rewards: &[f64]) -> f64 {
        rewards.first().copied().unwrap_or(0.0)
    }

    fn render(&self) -> String {
        format!("{} t={}/{}", self.name, self.clock.t(), self.clock.limit())
    }
}
