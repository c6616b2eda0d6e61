use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::TaskFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iql,
    Ia2c,
    Ippo,
    Maddpg,
    Coma,
    Maa2c,
    Mappo,
    Vdn,
    Qmix,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Iql,
        Algorithm::Ia2c,
        Algorithm::Ippo,
        Algorithm::Maddpg,
        Algorithm::Coma,
        Algorithm::Maa2c,
        Algorithm::Mappo,
        Algorithm::Vdn,
        Algorithm::Qmix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::Ia2c => "ia2c",
            Algorithm::Ippo => "ippo",
            Algorithm::Maddpg => "maddpg",
            Algorithm::Coma => "coma",
            Algorithm::Maa2c => "maa2c",
            Algorithm::Mappo => "mappo",
            Algorithm::Vdn => "vdn",
            Algorithm::Qmix => "qmix",
        }
    }

    /// Learns from a replay buffer rather than fresh rollouts.
    pub fn is_off_policy(self) -> bool {
        matches!(
            self,
            Algorithm::Iql | Algorithm::Vdn | Algorithm::Qmix | Algorithm::Maddpg
        )
    }

    /// Acts epsilon-greedily on learned action values.
    pub fn is_value_based(self) -> bool {
        matches!(self, Algorithm::Iql | Algorithm::Vdn | Algorithm::Qmix)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown algorithm `{0}`")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == lower)
            .ok_or_else(|| UnknownAlgorithm(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetUpdate {
    /// Copy the online parameters every `n` updates.
    Hard(u64),
    /// Polyak averaging with this rate after every update.
    Soft(f64),
}

pub const HARD_TARGET_INTERVAL: u64 = 200;
pub const SOFT_TARGET_RATE: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Every hyperparameter of one trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub hidden_dim: usize,
    pub lr: f64,
    pub reward_standardisation: bool,
    pub entropy_coef: f64,
    pub n_step: usize,
    pub target_update: TargetUpdate,
    pub epsilon_anneal: u64,
    pub eval_epsilon: f64,
    pub gamma: f64,
    pub ppo_epochs: usize,
    pub ppo_clip: f64,
    pub parameter_sharing: bool,
    pub actor_reg: f64,
    pub coma_lambda: f64,
    /// Replayed episodes per off-policy update.
    pub batch_size: usize,
    pub buffer_episodes: usize,
    pub buffer_transitions: usize,
    pub warmup: usize,
    pub n_workers: usize,
    pub grad_clip: f64,
    pub mixer_embed: usize,
    pub gumbel_temperature: f64,
}

impl TrainerConfig {
    /// Neutral defaults; [`preset`] fills in the tuned values.
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            hidden_dim: 64,
            lr: 5e-4,
            reward_standardisation: true,
            entropy_coef: 0.01,
            n_step: 5,
            target_update: TargetUpdate::Soft(SOFT_TARGET_RATE),
            epsilon_anneal: 50_000,
            eval_epsilon: 0.0,
            gamma: 0.99,
            ppo_epochs: 4,
            ppo_clip: 0.2,
            parameter_sharing: true,
            actor_reg: 0.001,
            coma_lambda: 0.8,
            batch_size: 32,
            buffer_episodes: 5000,
            buffer_transitions: 1_000_000,
            warmup: 1000,
            n_workers: 8,
            grad_clip: 10.0,
            mixer_embed: 32,
            gumbel_temperature: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_string()));
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return fail("eval_epsilon must lie in [0, 1]");
        }
        if self.entropy_coef < 0.0 || self.actor_reg < 0.0 {
            return fail("entropy_coef and actor_reg must be non-negative");
        }
        if self.n_step == 0 || self.ppo_epochs == 0 || self.batch_size == 0 || self.n_workers == 0 {
            return fail("n_step, ppo_epochs, batch_size and n_workers must be positive");
        }
        if self.buffer_episodes == 0 || self.buffer_transitions == 0 {
            return fail("replay capacity must be positive");
        }
        if !(self.ppo_clip > 0.0) || !(self.grad_clip > 0.0) {
            return fail("ppo_clip and grad_clip must be positive");
        }
        if !(0.0..=1.0).contains(&self.coma_lambda) {
            return fail("coma_lambda must lie in [0, 1]");
        }
        if self.mixer_embed == 0 {
            return fail("mixer_embed must be positive");
        }
        if !(self.gumbel_temperature > 0.0) {
            return fail("gumbel_temperature must be positive");
        }
        match self.target_update {
            TargetUpdate::Hard(0) => return fail("hard target interval must be positive"),
            TargetUpdate::Soft(t) if !(t > 0.0 && t <= 1.0) => {
                return fail("soft target rate must lie in (0, 1]")
            }
            _ => {}
        }
        Ok(())
    }
}

/// One column of a tuned-hyperparameter table.
struct Row {
    hidden: usize,
    lr: f64,
    standardise: bool,
    /// Evaluation epsilon, entropy coefficient or actor regularisation,
    /// depending on the algorithm.
    coef: f64,
    anneal: u64,
    hard_target: bool,
    n_step: usize,
}

const fn row(hidden: usize, lr: f64, standardise: bool, coef: f64, anneal: u64, hard_target: bool, n_step: usize) -> Row {
    Row {
        hidden,
        lr,
        standardise,
        coef,
        anneal,
        hard_target,
        n_step,
    }
}

const H: bool = true;
const S: bool = false;

/// Tuned rows for (matrix, lbf, rware).
fn table(algorithm: Algorithm, sharing: bool) -> [Row; 3] {
    use Algorithm::*;
    match (algorithm, sharing) {
        (Iql, true) => [
            row(128, 3e-4, true, 0.0, 50_000, H, 5),
            row(128, 3e-4, true, 0.05, 200_000, H, 5),
            row(64, 5e-4, true, 0.05, 50_000, S, 5),
        ],
        (Iql, false) => [
            row(64, 1e-4, true, 0.0, 50_000, S, 5),
            row(64, 3e-4, true, 0.05, 50_000, H, 5),
            row(64, 5e-4, true, 0.05, 50_000, S, 5),
        ],
        (Ia2c, true) => [
            row(64, 5e-4, true, 0.01, 0, S, 5),
            row(128, 5e-4, true, 0.001, 0, S, 5),
            row(64, 5e-4, true, 0.01, 0, S, 5),
        ],
        (Ia2c, false) => [
            row(128, 1e-4, true, 0.01, 0, H, 5),
            row(64, 5e-4, true, 0.01, 0, S, 5),
            row(64, 5e-4, true, 0.01, 0, S, 5),
        ],
        (Ippo, true) => [
            row(64, 5e-4, true, 0.001, 0, S, 5),
            row(128, 3e-4, false, 0.001, 0, H, 5),
            row(128, 5e-4, false, 0.001, 0, S, 10),
        ],
        (Ippo, false) => [
            row(64, 5e-4, true, 0.001, 0, S, 5),
            row(128, 1e-4, false, 0.001, 0, H, 5),
            row(128, 5e-4, false, 0.001, 0, S, 10),
        ],
        (Maddpg, true) => [
            row(128, 3e-4, true, 0.001, 0, H, 5),
            row(64, 3e-4, true, 0.001, 0, H, 5),
            row(64, 5e-4, false, 0.001, 0, S, 5),
        ],
        (Maddpg, false) => [
            row(128, 5e-4, true, 0.001, 0, H, 5),
            row(64, 3e-4, true, 0.001, 0, H, 5),
            row(64, 5e-4, false, 0.001, 0, S, 5),
        ],
        (Coma, true) => [
            row(64, 5e-4, true, 0.01, 0, S, 5),
            row(128, 1e-4, true, 0.001, 0, H, 10),
            row(64, 5e-4, true, 0.01, 0, S, 5),
        ],
        (Coma, false) => [
            row(128, 3e-4, true, 0.01, 0, S, 10),
            row(128, 1e-4, true, 0.001, 0, S, 5),
            row(64, 5e-4, false, 0.01, 0, S, 5),
        ],
        (Maa2c, true) => [
            row(128, 3e-3, true, 0.001, 0, S, 10),
            row(128, 5e-4, true, 0.01, 0, S, 10),
            row(64, 5e-4, true, 0.01, 0, S, 5),
        ],
        (Maa2c, false) => [
            row(64, 5e-4, true, 0.001, 0, S, 10),
            row(128, 5e-4, true, 0.01, 0, S, 5),
            row(64, 5e-4, true, 0.01, 0, S, 5),
        ],
        (Mappo, true) => [
            row(64, 5e-4, true, 0.001, 0, S, 5),
            row(128, 3e-4, false, 0.001, 0, S, 5),
            row(128, 5e-4, false, 0.001, 0, S, 10),
        ],
        (Mappo, false) => [
            row(64, 5e-4, true, 0.001, 0, S, 5),
            row(128, 1e-4, false, 0.001, 0, H, 10),
            row(128, 5e-4, false, 0.001, 0, S, 10),
        ],
        (Vdn, true) => [
            row(64, 1e-4, true, 0.0, 200_000, S, 5),
            row(128, 3e-4, true, 0.0, 200_000, S, 5),
            row(64, 5e-4, true, 0.05, 50_000, S, 5),
        ],
        (Vdn, false) => [
            row(128, 5e-4, true, 0.0, 50_000, S, 5),
            row(64, 1e-4, true, 0.05, 50_000, H, 5),
            row(64, 5e-4, true, 0.05, 50_000, S, 5),
        ],
        (Qmix, true) => [
            row(64, 3e-4, true, 0.0, 200_000, S, 5),
            row(64, 3e-4, true, 0.05, 200_000, S, 5),
            row(64, 5e-4, true, 0.05, 50_000, S, 5),
        ],
        (Qmix, false) => [
            row(128, 5e-4, true, 0.0, 50_000, S, 5),
            row(64, 1e-4, true, 0.05, 50_000, S, 5),
            row(64, 3e-4, true, 0.05, 50_000, S, 5),
        ],
    }
}

/// Tuned configuration for `algorithm` on a task family, with or without
/// parameter sharing. Recurrent entries of the source tables are served by
/// fully-connected networks of the same width.
pub fn preset(algorithm: Algorithm, family: TaskFamily, sharing: bool) -> TrainerConfig {
    let rows = table(algorithm, sharing);
    let r = match family {
        TaskFamily::Matrix => &rows[0],
        TaskFamily::Lbf => &rows[1],
        TaskFamily::Rware => &rows[2],
    };
    let mut cfg = TrainerConfig::new(algorithm);
    cfg.parameter_sharing = sharing;
    cfg.hidden_dim = r.hidden;
    cfg.lr = r.lr;
    cfg.reward_standardisation = r.standardise;
    cfg.n_step = r.n_step;
    cfg.target_update = if r.hard_target {
        TargetUpdate::Hard(HARD_TARGET_INTERVAL)
    } else {
        TargetUpdate::Soft(SOFT_TARGET_RATE)
    };
    if algorithm.is_value_based() {
        cfg.eval_epsilon = r.coef;
        cfg.epsilon_anneal = r.anneal;
    } else if algorithm == Algorithm::Maddpg {
        cfg.actor_reg = r.coef;
    } else {
        cfg.entropy_coef = r.coef;
    }
    cfg
}

/// The hyperparameter values explored by the grid search.
pub mod grid {
    pub const HIDDEN_DIM: [usize; 2] = [64, 128];
    pub const LEARNING_RATE: [f64; 3] = [1e-4, 3e-4, 5e-4];
    pub const REWARD_STANDARDISATION: [bool; 2] = [true, false];
    pub const EVAL_EPSILON: [f64; 2] = [0.0, 0.05];
    pub const EPSILON_ANNEAL: [u64; 2] = [50_000, 200_000];
    pub const ENTROPY_COEF: [f64; 2] = [0.01, 0.001];
    pub const N_STEP: [usize; 2] = [5, 10];
}
