//! Evaluation protocol: periodic evaluation, return statistics,
//! normalisation across algorithms, grid search and simulator throughput.

mod bench;
mod csv_io;
mod stats;

pub use bench::{bench_throughput, format_throughput_report, Throughput, BENCH_STEPS};
pub use csv_io::{read_results, write_results, write_summary, SummaryRow};
pub use stats::{avg_return, confidence_interval, max_return, normalize_returns, MaxReturn};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{build_trainer_for_task, Algorithm, TrainError, Trainer, TrainerConfig, grid};
use crate::env::{JointAction, JointObservation, MultiAgentEnv};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::task::{TaskFamily, TaskSpec};
use crate::EnvError;

/// Episodes averaged at every evaluation point.
pub const EVAL_EPISODES: usize = 100;

/// Seeds per configuration during grid search.
pub const GRID_SEEDS: u64 = 3;

/// One evaluation point of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub algorithm: String,
    pub seed: u64,
    pub sharing: bool,
    pub env_steps: u64,
    pub mean_return: f64,
}

/// Evaluation points at constant intervals, including step 0 and the final
/// step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalSchedule {
    pub total_steps: u64,
    pub n_points: usize,
}

impl EvalSchedule {
    pub const DEFAULT_POINTS: usize = 41;
    pub const MATRIX_POINTS: usize = 100;

    pub fn new(total_steps: u64, n_points: usize) -> Self {
        assert!(n_points >= 2, "a schedule needs at least two points");
        Self { total_steps, n_points }
    }

    pub fn for_family(family: TaskFamily, total_steps: u64) -> Self {
        let n = match family {
            TaskFamily::Matrix => Self::MATRIX_POINTS,
            _ => Self::DEFAULT_POINTS,
        };
        Self::new(total_steps, n)
    }

    /// Nominal spacing between points.
    pub fn interval(&self) -> f64 {
        self.total_steps as f64 / (self.n_points - 1) as f64
    }

    /// Step counts at which to evaluate, rounded down to whole steps.
    pub fn points(&self) -> Vec<u64> {
        let last = (self.n_points - 1) as u128;
        (0..self.n_points)
            .map(|k| (self.total_steps as u128 * k as u128 / last) as u64)
            .collect()
    }
}

/// Mean undiscounted team return of `policy` over `episodes` episodes.
///
/// Episode `e` resets the environment with a seed derived from `seed` and
/// `e`; the policy draws from its own stream derived from `seed`.
pub fn evaluate_with(
    env: &mut dyn MultiAgentEnv,
    episodes: usize,
    seed: u64,
    mut policy: impl FnMut(&JointObservation, &mut Rng) -> JointAction,
) -> Result<f64, EnvError> {
    let mut rng = rng_from_seed(derive_seed(seed, u64::MAX));
    let mut total = 0.0;
    for e in 0..episodes {
        let mut obs = env.reset(derive_seed(seed, e as u64))?;
        loop {
            let actions = policy(&obs, &mut rng);
            let result = env.step(&actions)?;
            total += env.team_reward(&result.rewards);
            if result.all_done() {
                break;
            }
            obs = result.next_obs;
        }
    }
    Ok(total / episodes.max(1) as f64)
}

/// [`evaluate_with`] using the trainer's evaluation behaviour.
pub fn evaluate(trainer: &dyn Trainer, env: &mut dyn MultiAgentEnv, episodes: usize, seed: u64) -> Result<f64, EnvError> {
    evaluate_with(env, episodes, seed, |obs, rng| trainer.act(obs, rng))
}

/// Uniformly random joint actions.
pub fn evaluate_random(env: &mut dyn MultiAgentEnv, episodes: usize, seed: u64) -> Result<f64, EnvError> {
    let space = env.action_space().clone();
    evaluate_with(env, episodes, seed, |_, rng| space.sample(rng))
}

/// Everything needed to train and evaluate one seed.
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub config: TrainerConfig,
    pub task: TaskSpec,
    pub seed: u64,
    pub schedule: EvalSchedule,
    pub time_limit: Option<usize>,
    pub eval_episodes: usize,
    pub early_stop: Option<EarlyStop>,
}

/// Stop once `consecutive` evaluations after step 0 in a row fall inside
/// `[min_return, max_return]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub min_return: f64,
    pub max_return: f64,
    pub consecutive: usize,
}

impl EarlyStop {
    pub fn at_least(min_return: f64, consecutive: usize) -> Self {
        Self {
            min_return,
            max_return: f64::INFINITY,
            consecutive,
        }
    }

    pub fn exactly(value: f64, consecutive: usize) -> Self {
        Self {
            min_return: value,
            max_return: value,
            consecutive,
        }
    }

    pub fn accepts(&self, mean_return: f64) -> bool {
        (self.min_return..=self.max_return).contains(&mean_return)
    }

    /// Whether the trailing evaluations of `records` satisfy the rule.
    pub fn satisfied(&self, records: &[MetricsRecord]) -> bool {
        let streak = records
            .iter()
            .rev()
            .take_while(|r| r.env_steps > 0 && self.accepts(r.mean_return))
            .count();
        streak >= self.consecutive
    }
}

impl TrainingRun {
    pub fn new(config: TrainerConfig, task: TaskSpec, seed: u64, total_steps: u64) -> Self {
        let schedule = EvalSchedule::for_family(task.family(), total_steps);
        Self {
            config,
            task,
            seed,
            schedule,
            time_limit: None,
            eval_episodes: EVAL_EPISODES,
            early_stop: None,
        }
    }

    /// Train, evaluating at every scheduled point. `on_record` sees each
    /// record as soon as it is produced.
    pub fn execute_with(&self, on_record: impl FnMut(&MetricsRecord)) -> Result<Vec<MetricsRecord>, TrainError> {
        let mut trainer = build_trainer_for_task(&self.config, &self.task, self.time_limit, self.seed)?;
        let mut env = self.task.build_with_limit(self.time_limit)?;
        self.execute_on(trainer.as_mut(), env.as_mut(), on_record)
    }

    /// [`TrainingRun::execute_with`] on a caller-built trainer and
    /// evaluation environment, which stay available afterwards.
    pub fn execute_on(
        &self,
        trainer: &mut dyn Trainer,
        env: &mut dyn MultiAgentEnv,
        mut on_record: impl FnMut(&MetricsRecord),
    ) -> Result<Vec<MetricsRecord>, TrainError> {
        let eval_seed = derive_seed(self.seed, 0xE7A1);
        let mut records = Vec::with_capacity(self.schedule.n_points);
        for (k, step) in self.schedule.points().into_iter().enumerate() {
            trainer.train_until(step)?;
            let mean_return = evaluate(&*trainer, &mut *env, self.eval_episodes, derive_seed(eval_seed, k as u64))?;
            let record = MetricsRecord {
                task: self.task.to_string(),
                algorithm: self.config.algorithm.to_string(),
                seed: self.seed,
                sharing: self.config.parameter_sharing,
                env_steps: step,
                mean_return,
            };
            on_record(&record);
            records.push(record);
            if self.early_stop.is_some_and(|e| e.satisfied(&records)) {
                break;
            }
        }
        Ok(records)
    }

    pub fn execute(&self) -> Result<Vec<MetricsRecord>, TrainError> {
        self.execute_with(|_| {})
    }
}

/// Per-seed curves of mean returns, ordered by seed then step.
pub fn curves_by_seed(records: &[MetricsRecord]) -> Vec<Vec<f64>> {
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .iter()
        .map(|&s| {
            let mut rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.seed == s).collect();
            rows.sort_by_key(|r| r.env_steps);
            rows.iter().map(|r| r.mean_return).collect()
        })
        .collect()
}

/// Summary of one (task, algorithm) group of records.
pub fn summarise(task: &str, algorithm: &str, records: &[MetricsRecord]) -> SummaryRow {
    let curves = curves_by_seed(records);
    let max = max_return(&curves);
    SummaryRow {
        task: task.to_string(),
        algorithm: algorithm.to_string(),
        max_return: max.value,
        ci: max.ci,
        avg_return: avg_return(&curves),
    }
}

/// The cartesian product of the searched hyperparameters around `base`.
/// Value-based methods search the exploration schedule and evaluation
/// epsilon; the others search the entropy coefficient and the n-step
/// horizon.
pub fn grid_configs(base: &TrainerConfig) -> Vec<TrainerConfig> {
    use crate::algorithms::{TargetUpdate, HARD_TARGET_INTERVAL, SOFT_TARGET_RATE};
    let mut out = Vec::new();
    let targets = [TargetUpdate::Hard(HARD_TARGET_INTERVAL), TargetUpdate::Soft(SOFT_TARGET_RATE)];
    for &hidden in &grid::HIDDEN_DIM {
        for &lr in &grid::LEARNING_RATE {
            for &std in &grid::REWARD_STANDARDISATION {
                for &target in &targets {
                    let mut cfg = base.clone();
                    cfg.hidden_dim = hidden;
                    cfg.lr = lr;
                    cfg.reward_standardisation = std;
                    cfg.target_update = target;
                    if base.algorithm.is_value_based() {
                        for &anneal in &grid::EPSILON_ANNEAL {
                            for &eval_eps in &grid::EVAL_EPSILON {
                                let mut c = cfg.clone();
                                c.epsilon_anneal = anneal;
                                c.eval_epsilon = eval_eps;
                                out.push(c);
                            }
                        }
                    } else if base.algorithm == Algorithm::Maddpg {
                        out.push(cfg);
                    } else {
                        for &entropy in &grid::ENTROPY_COEF {
                            for &n_step in &grid::N_STEP {
                                let mut c = cfg.clone();
                                c.entropy_coef = entropy;
                                c.n_step = n_step;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Outcome of [`grid_search`].
#[derive(Clone, Debug)]
pub struct GridResult {
    pub best_index: usize,
    pub best: TrainerConfig,
    /// Maximum return of every candidate, in grid order.
    pub scores: Vec<f64>,
}

/// Pick the candidate with the highest maximum return across `seeds`
/// seeds, scored by `run(config, seed)` returning one evaluation curve.
/// Ties go to the earliest candidate.
///
/// # Panics
/// If `candidates` is empty.
pub fn grid_search<E: Send>(
    candidates: &[TrainerConfig],
    seeds: u64,
    run: impl Fn(&TrainerConfig, u64) -> Result<Vec<f64>, E> + Sync,
) -> Result<GridResult, E> {
    assert!(!candidates.is_empty(), "grid search needs at least one candidate");
    let jobs: Vec<(usize, u64)> = (0..candidates.len()).flat_map(|c| (0..seeds).map(move |s| (c, s))).collect();
    let curves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(c, s)| run(&candidates[c], s))
        .collect::<Result<_, E>>()?;
    let scores: Vec<f64> = curves
        .chunks(seeds as usize)
        .map(|chunk| max_return(chunk).value)
        .collect();
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult {
        best_index,
        best: candidates[best_index].clone(),
        scores,
    })
}

/// Grid search that trains each candidate on `task` for `total_steps`.
pub fn grid_search_task(
    candidates: &[TrainerConfig],
    task: &TaskSpec,
    total_steps: u64,
    seeds: u64,
) -> Result<GridResult, TrainError> {
    grid_search(candidates, seeds, |cfg, seed| {
        let run = TrainingRun::new(cfg.clone(), task.clone(), seed, total_steps);
        Ok(run.execute()?.into_iter().map(|r| r.mean_return).collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_includes_both_ends() {
        let s = EvalSchedule::new(400, 41);
        let p = s.points();
        assert_eq!(p.len(), 41);
        assert_eq!(p[0], 0);
        assert_eq!(p[1], 10);
        assert_eq!(*p.last().unwrap(), 400);
        assert_eq!(s.interval(), 10.0);
        assert_eq!(EvalSchedule::for_family(TaskFamily::Matrix, 1000).n_points, 100);
        assert_eq!(EvalSchedule::for_family(TaskFamily::Rware, 1000).n_points, 41);
    }

    #[test]
    fn early_stop_ignores_step_zero() {
        let rec = |env_steps, mean_return| MetricsRecord {
            task: "t".into(),
            algorithm: "a".into(),
            seed: 0,
            sharing: true,
            env_steps,
            mean_return,
        };
        let rule = EarlyStop::at_least(249.0, 2);
        assert!(!rule.satisfied(&[rec(0, 250.0), rec(10, 250.0)]));
        assert!(rule.satisfied(&[rec(0, 250.0), rec(10, 250.0), rec(20, 250.0)]));
        assert!(!rule.satisfied(&[rec(10, 250.0), rec(20, 0.0)]));
        let exact = EarlyStop::exactly(50.0, 1);
        assert!(exact.satisfied(&[rec(5, 50.0)]));
        assert!(!exact.satisfied(&[rec(5, 50.000001)]));
    }

    #[test]
    fn grid_sizes() {
        use crate::algorithms::TrainerConfig;
        assert_eq!(grid_configs(&TrainerConfig::new(Algorithm::Qmix)).len(), 2 * 3 * 2 * 2 * 4);
        assert_eq!(grid_configs(&TrainerConfig::new(Algorithm::Mappo)).len(), 2 * 3 * 2 * 2 * 4);
        assert_eq!(grid_configs(&TrainerConfig::new(Algorithm::Maddpg)).len(), 2 * 3 * 2 * 2);
    }

    #[test]
    fn grid_search_prefers_first_on_tie() {
        let grid = vec![TrainerConfig::new(Algorithm::Iql); 3];
        let r = grid_search::<()>(&grid, 2, |_, _| Ok(vec![1.0, 2.0])).unwrap();
        assert_eq!(r.best_index, 0);
        let r = grid_search::<()>(&grid[..1], 3, |_, _| Ok(vec![0.0])).unwrap();
        assert_eq!(r.best_index, 0);
    }
}
