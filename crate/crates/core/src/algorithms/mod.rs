//! The nine multi-agent trainers.
//!
//! Off-policy trainers (IQL, VDN, QMIX, MADDPG) step one environment and,
//! after each finished episode, perform one gradient update on every
//! transition of `batch_size` replayed episodes once the buffer holds the
//! warm-up amount of transitions. On-policy trainers (IA2C, IPPO, MAA2C,
//! MAPPO, COMA) collect `n_step`-long rollouts from `n_workers` synchronous
//! environments and update once per rollout.

pub mod agents;
pub mod common;
pub mod config;
mod coma;
mod maddpg;
mod policy;
pub mod qmix;
pub mod replay;
mod value;

use std::path::Path;

use thiserror::Error;

pub use coma::ComaTrainer;
pub use config::{grid, preset, Algorithm, ConfigError, TargetUpdate, TrainerConfig, HARD_TARGET_INTERVAL, SOFT_TARGET_RATE};
pub use maddpg::MaddpgTrainer;
pub use policy::PolicyTrainer;
pub use value::ValueTrainer;

use crate::autodiff::gradcheck::GradCheckReport;
use crate::autodiff::{read_checkpoint, write_checkpoint, ParamStore, TensorError};
use crate::env::{EnvError, JointAction, JointObservation, MultiAgentEnv};
use crate::rng::Rng;
use crate::task::TaskSpec;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Progress counters reported by [`Trainer::train_until`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub last_loss: Option<f64>,
}

pub trait Trainer: Send {
    fn config(&self) -> &TrainerConfig;

    fn env_steps(&self) -> u64;

    /// Interact and learn until at least `env_steps` environment steps have
    /// been taken in total.
    fn train_until(&mut self, env_steps: u64) -> Result<TrainStats, TrainError>;

    /// Evaluation-time behaviour: epsilon-greedy with the evaluation epsilon
    /// for value-based methods, a policy sample otherwise. Never changes the
    /// learned state.
    fn act(&self, obs: &JointObservation, rng: &mut Rng) -> JointAction;

    /// Finite-difference check of every loss of this trainer on a small
    /// batch derived from `seed`.
    fn gradient_check(&self, seed: u64) -> GradCheckReport;

    /// Every trainable store, in a fixed order.
    fn parameters(&self) -> Vec<&ParamStore>;

    fn parameters_mut(&mut self) -> Vec<&mut ParamStore>;
}

/// Builds fresh environment instances for one trainer.
pub type EnvFactory<'a> = &'a dyn Fn() -> Result<Box<dyn MultiAgentEnv>, EnvError>;

/// Construct the trainer named by `cfg.algorithm`.
pub fn build_trainer(cfg: &TrainerConfig, make_env: EnvFactory<'_>, seed: u64) -> Result<Box<dyn Trainer>, TrainError> {
    cfg.validate()?;
    Ok(match cfg.algorithm {
        Algorithm::Iql | Algorithm::Vdn | Algorithm::Qmix => Box::new(ValueTrainer::new(cfg.clone(), make_env()?, seed)?),
        Algorithm::Ia2c | Algorithm::Ippo | Algorithm::Maa2c | Algorithm::Mappo => {
            Box::new(PolicyTrainer::new(cfg.clone(), make_env, seed)?)
        }
        Algorithm::Coma => Box::new(ComaTrainer::new(cfg.clone(), make_env, seed)?),
        Algorithm::Maddpg => Box::new(MaddpgTrainer::new(cfg.clone(), make_env()?, seed)?),
    })
}

/// [`build_trainer`] on environments of a registered task.
pub fn build_trainer_for_task(
    cfg: &TrainerConfig,
    task: &TaskSpec,
    time_limit: Option<usize>,
    seed: u64,
) -> Result<Box<dyn Trainer>, TrainError> {
    build_trainer(cfg, &|| task.build_with_limit(time_limit), seed)
}

/// Write all of a trainer's parameters to one checkpoint file.
pub fn save_trainer(path: impl AsRef<Path>, trainer: &dyn Trainer) -> Result<(), TensorError> {
    let tensors: Vec<_> = trainer
        .parameters()
        .into_iter()
        .flat_map(|s| s.params().iter().cloned())
        .collect();
    write_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?), &tensors)
}

/// Restore parameters written by [`save_trainer`] into a trainer of the
/// same configuration.
pub fn load_trainer(path: impl AsRef<Path>, trainer: &mut dyn Trainer) -> Result<(), TensorError> {
    let tensors = read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let mut stores = trainer.parameters_mut();
    let expected: usize = stores.iter().map(|s| s.len()).sum();
    if tensors.len() != expected {
        return Err(TensorError::Checkpoint(format!(
            "expected {expected} tensors, file has {}",
            tensors.len()
        )));
    }
    let mut it = tensors.into_iter();
    for store in stores.iter_mut() {
        for p in store.params_mut() {
            let t = it.next().unwrap();
            if t.shape() != p.shape() {
                return Err(TensorError::Checkpoint(format!(
                    "shape {:?} does not match {:?}",
                    t.shape(),
                    p.shape()
                )));
            }
            *p = t;
        }
    }
    Ok(())
}

/// Merge reports from several stores.
pub(crate) fn merge_reports(reports: &[GradCheckReport]) -> GradCheckReport {
    reports.iter().fold(
        GradCheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
        },
        |acc, r| GradCheckReport {
            max_rel_error: acc.max_rel_error.max(r.max_rel_error),
            max_abs_error: acc.max_abs_error.max(r.max_abs_error),
            checked: acc.checked + r.checked,
        },
    )
}
