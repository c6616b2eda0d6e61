use std::fmt::Write as _;
use std::time::Instant;

use crate::rng::{derive_seed, rng_from_seed};
use crate::task::TaskSpec;
use crate::EnvError;

/// Steps simulated per benchmark.
pub const BENCH_STEPS: usize = 10_000;

/// Wall-clock cost of random-action simulation for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    pub task: String,
    pub n_agents: usize,
    pub steps: usize,
    pub total_seconds: f64,
}

impl Throughput {
    pub fn ms_per_step(&self) -> f64 {
        self.total_seconds * 1000.0 / self.steps as f64
    }
}

/// Time `steps` uniformly random joint actions on `task`, resetting
/// whenever an episode ends.
pub fn bench_throughput(task: &TaskSpec, steps: usize, seed: u64) -> Result<Throughput, EnvError> {
    let mut env = task.build()?;
    let space = env.action_space().clone();
    let mut rng = rng_from_seed(seed);
    let mut episode = 0;
    let start = Instant::now();
    env.reset(derive_seed(seed, episode))?;
    for _ in 0..steps {
        let actions = space.sample(&mut rng);
        if env.step(&actions)?.all_done() {
            episode += 1;
            env.reset(derive_seed(seed, episode))?;
        }
    }
    Ok(Throughput {
        task: task.to_string(),
        n_agents: env.n_agents(),
        steps,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Plain-text table with one row per task: task, number of agents, total
/// time in seconds and time per step in milliseconds.
pub fn format_throughput_report(rows: &[Throughput]) -> String {
    let width = rows.iter().map(|r| r.task.len()).max().unwrap_or(0).max("Task".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>16}  {:>18}  {:>21}",
        "Task", "Number of agents", "Total time [in s]", "Time per step [in ms]"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>16}  {:>18.3}  {:>21.3}",
            r.task,
            r.n_agents,
            r.total_seconds,
            r.ms_per_step()
        );
    }
    out
}
