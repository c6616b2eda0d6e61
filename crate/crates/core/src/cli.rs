//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::algorithms::{build_trainer_for_task, load_trainer, preset, save_trainer, Algorithm, TrainerConfig};
use crate::harness::{
    bench_throughput, evaluate, format_throughput_report, grid_configs, grid_search_task, summarise,
    write_results, write_summary, EvalSchedule, TrainingRun, BENCH_STEPS, EVAL_EPISODES, GRID_SEEDS,
};
use crate::task::{benchmark_tasks, TaskSpec};

/// Environment variable naming the default results directory.
pub const RESULTS_DIR_VAR: &str = "MARLBENCH_RESULTS_DIR";

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "marlbench", version, about = "Cooperative multi-agent RL benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one algorithm on one task and write evaluation results.
    Train(TrainArgs),
    /// Evaluate a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Time random-action simulation of tasks.
    Bench(BenchArgs),
    /// Search the hyperparameter grid for one algorithm and task.
    GridSearch(GridArgs),
    /// Print every registered benchmark task name.
    ListTasks,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sharing {
    On,
    Off,
}

/// Options naming a trainer configuration.
#[derive(Args, Debug, Clone, Default)]
pub struct RunOptions {
    /// Flat TOML file of run and trainer keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// Parameter sharing across agents.
    #[arg(long, value_enum)]
    pub sharing: Option<Sharing>,
    /// Episode step limit for grid-world tasks.
    #[arg(long)]
    pub time_limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunOptions,
    /// Total environment steps per seed.
    #[arg(long)]
    pub steps: Option<u64>,
    /// First seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Evaluation episodes per point.
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    /// Evaluation points including step 0 (default 41, or 100 for matrix games).
    #[arg(long)]
    pub eval_points: Option<usize>,
    #[arg(long, env = RESULTS_DIR_VAR, default_value = "results")]
    pub results_dir: PathBuf,
    /// Directory for one checkpoint per seed after training.
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunOptions,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = EVAL_EPISODES)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Tasks to time; every registered task when omitted.
    #[arg(long = "task")]
    pub tasks: Vec<String>,
    #[arg(long, default_value_t = BENCH_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub run: RunOptions,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = GRID_SEEDS)]
    pub seeds: u64,
    /// Only search the first N grid points.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, env = RESULTS_DIR_VAR, default_value = "results")]
    pub results_dir: PathBuf,
}

/// Run-level keys accepted in a config file besides trainer keys.
const RUN_KEYS: [&str; 9] = [
    "algorithm",
    "task",
    "sharing",
    "time_limit",
    "steps",
    "seed",
    "seeds",
    "eval_episodes",
    "eval_points",
];

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

/// Resolved run description.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub task: TaskSpec,
    pub config: TrainerConfig,
    pub time_limit: Option<usize>,
    file: toml::Table,
}

impl Resolved {
    fn get<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.file
            .get(key)
            .map(|v| v.clone().try_into::<T>().with_context(|| format!("config key `{key}`")))
            .transpose()
            .map_err(config_err)
    }
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_err)?;
    text.parse::<toml::Table>()
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_err)
}

/// Merge preset, config file and flags into a trainer configuration.
pub fn resolve(opts: &RunOptions) -> Result<Resolved, CliError> {
    let file = match &opts.config {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    let from_file = |key: &str| file.get(key).and_then(|v| v.as_str()).map(str::to_string);
    let algorithm: Algorithm = opts
        .algorithm
        .clone()
        .or_else(|| from_file("algorithm"))
        .ok_or_else(|| config_err(anyhow!("no algorithm given")))?
        .parse()
        .map_err(config_err)?;
    let task: TaskSpec = opts
        .task
        .clone()
        .or_else(|| from_file("task"))
        .ok_or_else(|| config_err(anyhow!("no task given")))?
        .parse()
        .map_err(config_err)?;
    let sharing = match opts.sharing {
        Some(s) => s,
        None => match file.get("sharing") {
            Some(v) => v.clone().try_into::<Sharing>().context("config key `sharing`").map_err(config_err)?,
            None => Sharing::On,
        },
    };
    let base = preset(algorithm, task.family(), sharing == Sharing::On);
    let mut table = toml::Table::try_from(&base).map_err(config_err)?;
    for (k, v) in &file {
        if RUN_KEYS.contains(&k.as_str()) {
            continue;
        }
        if k == "parameter_sharing" {
            return Err(config_err(anyhow!("use `sharing = \"on\"|\"off\"` instead of `parameter_sharing`")));
        }
        if !table.contains_key(k) {
            return Err(config_err(anyhow!("unknown config key `{k}`")));
        }
        table.insert(k.clone(), v.clone());
    }
    let config: TrainerConfig = table.try_into().context("trainer configuration").map_err(config_err)?;
    config.validate().map_err(config_err)?;
    let mut resolved = Resolved {
        task,
        config,
        time_limit: None,
        file,
    };
    resolved.time_limit = match opts.time_limit {
        Some(t) => Some(t),
        None => resolved.get("time_limit")?,
    };
    Ok(resolved)
}

fn sharing_label(cfg: &TrainerConfig) -> &'static str {
    if cfg.parameter_sharing {
        "sharing"
    } else {
        "nosharing"
    }
}

fn run_stem(task: &TaskSpec, cfg: &TrainerConfig) -> String {
    format!("{task}__{}__{}", cfg.algorithm, sharing_label(cfg))
}

fn create_file(path: &Path) -> Result<fs::File, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime_err)?;
    }
    fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime_err)
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let r = resolve(&args.run)?;
    let steps = args.steps.or(r.get("steps")?).ok_or_else(|| config_err(anyhow!("no step budget given")))?;
    let first_seed = args.seed.or(r.get("seed")?).unwrap_or(0);
    let n_seeds = args.seeds.or(r.get("seeds")?).unwrap_or(1);
    if n_seeds == 0 {
        return Err(config_err(anyhow!("seeds must be positive")));
    }
    let eval_episodes = args.eval_episodes.or(r.get("eval_episodes")?).unwrap_or(EVAL_EPISODES);
    let eval_points: Option<usize> = args.eval_points.or(r.get("eval_points")?);
    if eval_points.is_some_and(|p| p < 2) {
        return Err(config_err(anyhow!("eval_points must be at least 2")));
    }
    let stem = run_stem(&r.task, &r.config);
    let runs: Vec<TrainingRun> = (first_seed..first_seed + n_seeds)
        .map(|seed| {
            let mut run = TrainingRun::new(r.config.clone(), r.task.clone(), seed, steps);
            run.time_limit = r.time_limit;
            run.eval_episodes = eval_episodes;
            if let Some(p) = eval_points {
                run.schedule = EvalSchedule::new(steps, p);
            }
            run
        })
        .collect();
    let outputs: Vec<_> = runs
        .par_iter()
        .map(|run| -> Result<_, CliError> {
            let mut trainer =
                build_trainer_for_task(&run.config, &run.task, run.time_limit, run.seed).map_err(runtime_err)?;
            let mut env = run.task.build_with_limit(run.time_limit).map_err(runtime_err)?;
            let records = run.execute_on(trainer.as_mut(), env.as_mut(), |rec| {
                eprintln!("seed {} step {} return {:.4}", rec.seed, rec.env_steps, rec.mean_return);
            });
            let records = records.map_err(runtime_err)?;
            if let Some(dir) = &args.checkpoint_dir {
                fs::create_dir_all(dir).map_err(runtime_err)?;
                let path = dir.join(format!("{stem}__seed{}.ckpt", run.seed));
                save_trainer(&path, trainer.as_ref()).map_err(runtime_err)?;
            }
            Ok(records)
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<_> = outputs.into_iter().flatten().collect();
    let results_path = args.results_dir.join(format!("{stem}.csv"));
    write_results(create_file(&results_path)?, &records).map_err(runtime_err)?;
    let summary = summarise(&r.task.to_string(), r.config.algorithm.as_str(), &records);
    if n_seeds < 2 {
        eprintln!("warning: a single seed has no confidence interval; reporting 0");
    }
    let summary_path = args.results_dir.join(format!("{stem}__summary.csv"));
    write_summary(create_file(&summary_path)?, std::slice::from_ref(&summary)).map_err(runtime_err)?;
    println!(
        "{} {} max_return {:.4} ± {:.4} avg_return {:.4}",
        summary.task, summary.algorithm, summary.max_return, summary.ci, summary.avg_return
    );
    println!("results: {}", results_path.display());
    println!("summary: {}", summary_path.display());
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let r = resolve(&args.run)?;
    let mut trainer = build_trainer_for_task(&r.config, &r.task, r.time_limit, args.seed).map_err(runtime_err)?;
    load_trainer(&args.checkpoint, trainer.as_mut())
        .with_context(|| format!("loading {}", args.checkpoint.display()))
        .map_err(runtime_err)?;
    let mut env = r.task.build_with_limit(r.time_limit).map_err(runtime_err)?;
    let mean = evaluate(trainer.as_ref(), env.as_mut(), args.episodes, args.seed).map_err(runtime_err)?;
    println!("{} {} mean_return {:.4} over {} episodes", r.task, r.config.algorithm, mean, args.episodes);
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let tasks: Vec<TaskSpec> = if args.tasks.is_empty() {
        benchmark_tasks()
    } else {
        args.tasks
            .iter()
            .map(|t| t.parse().map_err(config_err))
            .collect::<Result<_, _>>()?
    };
    let rows = tasks
        .iter()
        .map(|t| bench_throughput(t, args.steps, args.seed).map_err(runtime_err))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", format_throughput_report(&rows));
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<(), CliError> {
    let r = resolve(&args.run)?;
    let steps = args.steps.or(r.get("steps")?).ok_or_else(|| config_err(anyhow!("no step budget given")))?;
    let mut grid = grid_configs(&r.config);
    if let Some(limit) = args.limit {
        grid.truncate(limit.max(1));
    }
    let result = grid_search_task(&grid, &r.task, steps, args.seeds).map_err(runtime_err)?;
    let path = args.results_dir.join(format!("{}__grid.csv", run_stem(&r.task, &r.config)));
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    w.write_record(["index", "hidden_dim", "lr", "reward_standardisation", "target_update", "epsilon_anneal", "eval_epsilon", "entropy_coef", "n_step", "max_return"])
        .map_err(runtime_err)?;
    for (i, (c, s)) in grid.iter().zip(&result.scores).enumerate() {
        w.write_record([
            i.to_string(),
            c.hidden_dim.to_string(),
            c.lr.to_string(),
            c.reward_standardisation.to_string(),
            format!("{:?}", c.target_update),
            c.epsilon_anneal.to_string(),
            c.eval_epsilon.to_string(),
            c.entropy_coef.to_string(),
            c.n_step.to_string(),
            s.to_string(),
        ])
        .map_err(runtime_err)?;
    }
    w.flush().map_err(runtime_err)?;
    println!("# best of {} candidates: index {}, max_return {:.4}", grid.len(), result.best_index, result.scores[result.best_index]);
    print!("{}", toml::to_string(&result.best).map_err(runtime_err)?);
    Ok(())
}

fn cmd_list_tasks() {
    for t in benchmark_tasks() {
        println!("{t}");
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::GridSearch(a) => cmd_grid(a),
        Command::ListTasks => {
            cmd_list_tasks();
            Ok(())
        }
    }
}

/// Parse arguments, run, and map failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let (CliError::Config(err) | CliError::Runtime(err)) = e;
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
