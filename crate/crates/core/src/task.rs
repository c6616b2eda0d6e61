//! Task names and the task registry.
//!
//! Grammars:
//! - matrix games: `climbing`, `penalty-k<k>` with `k <= 0`
//! - foraging: `Foraging[-<r>s]-<x>x<y>-<n>p-<f>f[-coop]-v1`
//! - warehouse: `rware-<tiny|small|medium|large>-<n>ag[-easy|-hard]-v1`

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::env::lbf::LBF_DEFAULT_TIME_LIMIT;
use crate::env::rware::{Difficulty, RWARE_DEFAULT_TIME_LIMIT};
use crate::env::{
    EnvError, LbfConfig, LevelBasedForaging, MatrixGame, MultiAgentEnv, RobotWarehouse,
    RwareConfig, Sight, WarehouseSize,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse task name at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskFamily {
    Matrix,
    Lbf,
    Rware,
}

impl TaskFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskFamily::Matrix => "matrix",
            TaskFamily::Lbf => "lbf",
            TaskFamily::Rware => "rware",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatrixTask {
    Climbing,
    Penalty(i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LbfTask {
    /// Visibility radius; `None` for full observability.
    pub sight: Option<u32>,
    pub x_size: usize,
    pub y_size: usize,
    pub n_agents: usize,
    pub n_food: usize,
    pub coop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RwareTask {
    pub size: WarehouseSize,
    pub n_agents: usize,
    pub difficulty: Difficulty,
}

impl RwareTask {
    pub fn request_count(&self) -> usize {
        self.difficulty.request_count(self.n_agents)
    }
}

/// Parsed identity of a benchmark task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskSpec {
    Matrix(MatrixTask),
    Lbf(LbfTask),
    Rware(RwareTask),
}

/// Benchmark tasks registered by default.
pub const BENCHMARK_TASKS: [&str; 16] = [
    "climbing",
    "penalty-k0",
    "penalty-k-25",
    "penalty-k-50",
    "penalty-k-75",
    "penalty-k-100",
    "Foraging-8x8-2p-2f-coop-v1",
    "Foraging-2s-8x8-2p-2f-coop-v1",
    "Foraging-10x10-3p-3f-v1",
    "Foraging-2s-10x10-3p-3f-v1",
    "Foraging-15x15-3p-5f-v1",
    "Foraging-15x15-4p-3f-v1",
    "Foraging-15x15-4p-5f-v1",
    "rware-tiny-2ag-v1",
    "rware-tiny-4ag-v1",
    "rware-small-4ag-v1",
];

pub fn benchmark_tasks() -> Vec<TaskSpec> {
    BENCHMARK_TASKS
        .iter()
        .map(|n| n.parse().expect("registered task names parse"))
        .collect()
}

impl TaskSpec {
    pub fn family(&self) -> TaskFamily {
        match self {
            TaskSpec::Matrix(_) => TaskFamily::Matrix,
            TaskSpec::Lbf(_) => TaskFamily::Lbf,
            TaskSpec::Rware(_) => TaskFamily::Rware,
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            TaskSpec::Matrix(_) => 2,
            TaskSpec::Lbf(t) => t.n_agents,
            TaskSpec::Rware(t) => t.n_agents,
        }
    }

    pub fn default_time_limit(&self) -> usize {
        match self {
            TaskSpec::Matrix(_) => crate::env::matrix::MATRIX_EPISODE_LENGTH,
            TaskSpec::Lbf(_) => LBF_DEFAULT_TIME_LIMIT,
            TaskSpec::Rware(_) => RWARE_DEFAULT_TIME_LIMIT,
        }
    }

    /// Instantiates the environment. `time_limit` overrides the family
    /// default for grid worlds; matrix games always run 25 steps.
    pub fn build_with_limit(
        &self,
        time_limit: Option<usize>,
    ) -> Result<Box<dyn MultiAgentEnv>, EnvError> {
        let limit = time_limit.unwrap_or_else(|| self.default_time_limit());
        Ok(match *self {
            TaskSpec::Matrix(MatrixTask::Climbing) => Box::new(MatrixGame::climbing()),
            TaskSpec::Matrix(MatrixTask::Penalty(k)) => Box::new(MatrixGame::penalty(k)?),
            TaskSpec::Lbf(t) => Box::new(LevelBasedForaging::new(LbfConfig {
                x_size: t.x_size,
                y_size: t.y_size,
                n_agents: t.n_agents,
                n_food: t.n_food,
                sight: t.sight.map_or(Sight::Full, Sight::Radius),
                coop: t.coop,
                time_limit: limit,
            })?),
            TaskSpec::Rware(t) => Box::new(RobotWarehouse::new(RwareConfig {
                size: t.size,
                n_agents: t.n_agents,
                difficulty: t.difficulty,
                time_limit: limit,
            })?),
        })
    }

    pub fn build(&self) -> Result<Box<dyn MultiAgentEnv>, EnvError> {
        self.build_with_limit(None)
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskSpec::Matrix(MatrixTask::Climbing) => write!(f, "climbing"),
            TaskSpec::Matrix(MatrixTask::Penalty(k)) => write!(f, "penalty-k{k}"),
            TaskSpec::Lbf(t) => {
                write!(f, "Foraging")?;
                if let Some(r) = t.sight {
                    write!(f, "-{r}s")?;
                }
                write!(f, "-{}x{}-{}p-{}f", t.x_size, t.y_size, t.n_agents, t.n_food)?;
                if t.coop {
                    write!(f, "-coop")?;
                }
                write!(f, "-v1")
            }
            TaskSpec::Rware(t) => {
                let diff = match t.difficulty {
                    Difficulty::Normal => "",
                    Difficulty::Easy => "-easy",
                    Difficulty::Hard => "-hard",
                };
                write!(f, "rware-{}-{}ag{}-v1", t.size.as_str(), t.n_agents, diff)
            }
        }
    }
}

impl FromStr for TaskSpec {
    type Err = ParseError;

    fn from_str(name: &str) -> Result<Self, Self::Err> {
        parse_task_name(name)
    }
}

/// Cursor over a task name that remembers byte offsets for error messages.
struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.rest().starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), ParseError> {
        if self.eat(lit) {
            Ok(())
        } else {
            self.fail(format!("expected `{lit}`"))
        }
    }

    fn number(&mut self) -> Result<usize, ParseError> {
        let digits = self.rest().bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return self.fail("expected a number");
        }
        let n = self.rest()[..digits].parse().or_else(|_| self.fail("number too large"))?;
        self.pos += digits;
        Ok(n)
    }

    fn ranged(&mut self, what: &str, lo: usize, hi: usize) -> Result<usize, ParseError> {
        let start = self.pos;
        let n = self.number()?;
        if !(lo..=hi).contains(&n) {
            return Err(ParseError {
                position: start,
                message: format!("{what} {n} outside {lo}..={hi}"),
            });
        }
        Ok(n)
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.rest().is_empty() {
            Ok(())
        } else {
            self.fail(format!("unexpected trailing `{}`", self.rest()))
        }
    }
}

pub fn parse_task_name(name: &str) -> Result<TaskSpec, ParseError> {
    let mut c = Cursor::new(name);
    if c.eat("climbing") {
        c.end()?;
        return Ok(TaskSpec::Matrix(MatrixTask::Climbing));
    }
    if c.eat("penalty-k") {
        let negative = c.eat("-");
        let start = c.pos;
        let k = c.number()? as i64;
        c.end()?;
        let k = if negative { -k } else { k };
        if k > 0 || k < i32::MIN as i64 {
            return Err(ParseError {
                position: start,
                message: format!("penalty k must be a non-positive integer, got {k}"),
            });
        }
        return Ok(TaskSpec::Matrix(MatrixTask::Penalty(k as i32)));
    }
    if c.eat("Foraging") {
        let mut sight = None;
        if c.rest().starts_with('-') && c.rest()[1..].starts_with(|ch: char| ch.is_ascii_digit()) {
            let save = c.pos;
            c.expect("-")?;
            let r = c.number()?;
            if c.eat("s") {
                if r != 2 {
                    return Err(ParseError {
                        position: save + 1,
                        message: format!("only sight radius 2 is supported, got {r}"),
                    });
                }
                sight = Some(r as u32);
            } else {
                c.pos = save;
            }
        }
        c.expect("-")?;
        let x_size = c.ranged("x_size", 5, 20)?;
        c.expect("x")?;
        let y_size = c.ranged("y_size", 5, 20)?;
        c.expect("-")?;
        let n_agents = c.ranged("n_agents", 2, 5)?;
        c.expect("p-")?;
        let n_food = c.ranged("food", 1, 10)?;
        c.expect("f")?;
        let coop_pos = c.pos;
        let coop = c.eat("-coop");
        if coop && n_agents > 4 {
            return Err(ParseError {
                position: coop_pos,
                message: "cooperative mode supports at most 4 agents".into(),
            });
        }
        c.expect("-v1")?;
        c.end()?;
        return Ok(TaskSpec::Lbf(LbfTask {
            sight,
            x_size,
            y_size,
            n_agents,
            n_food,
            coop,
        }));
    }
    if c.eat("rware-") {
        let start = c.pos;
        let word: String = c.rest().chars().take_while(|ch| ch.is_ascii_alphabetic()).collect();
        let Some(size) = WarehouseSize::parse(&word) else {
            return Err(ParseError {
                position: start,
                message: format!("unknown warehouse size `{word}`"),
            });
        };
        c.pos += word.len();
        c.expect("-")?;
        let n_agents = c.ranged("num_agents", 1, 20)?;
        c.expect("ag")?;
        let difficulty = if c.eat("-easy") {
            Difficulty::Easy
        } else if c.eat("-hard") {
            Difficulty::Hard
        } else {
            Difficulty::Normal
        };
        c.expect("-v1")?;
        c.end()?;
        return Ok(TaskSpec::Rware(RwareTask {
            size,
            n_agents,
            difficulty,
        }));
    }
    c.fail(format!("unknown task `{name}`"))
}
