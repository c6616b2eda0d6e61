//! Level-Based Foraging.
//!
//! Levelled agents walk a grid and collect levelled food. A food item is
//! collected when the agents next to it that choose `Pickup` in the same tick
//! have summed levels at least the item's level. Coordinates are `(x, y)` with
//! the origin in the bottom-left corner; `North` increases `y`.
//!
//! Per-agent rewards are normalised so that collecting every item of an
//! episode yields a total (summed over agents) of exactly one.

use rand::Rng as _;

use super::{
    step_info, ActionSpace, EnvError, EpisodeClock, JointObservation, MultiAgentEnv,
    ObservationSpace, Phase, StepResult,
};
use crate::rng::{rng_from_seed, Rng};

pub const LBF_DEFAULT_TIME_LIMIT: usize = 50;
pub const LBF_N_ACTIONS: usize = 6;
/// Radius of the partially observable window (a 5x5 square).
pub const SIGHT_RADIUS: i32 = 2;
const SPAWN_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfAction {
    Noop = 0,
    North = 1,
    South = 2,
    West = 3,
    East = 4,
    Pickup = 5,
}

impl LbfAction {
    pub fn from_index(i: usize) -> Option<Self> {
        use LbfAction::*;
        [Noop, North, South, West, East, Pickup].get(i).copied()
    }

    fn delta(self) -> (i32, i32) {
        match self {
            LbfAction::North => (0, 1),
            LbfAction::South => (0, -1),
            LbfAction::West => (-1, 0),
            LbfAction::East => (1, 0),
            LbfAction::Noop | LbfAction::Pickup => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sight {
    Full,
    /// Agents see a `(2r+1) x (2r+1)` window centred on themselves.
    Radius(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LbfConfig {
    pub x_size: usize,
    pub y_size: usize,
    pub n_agents: usize,
    pub n_food: usize,
    pub sight: Sight,
    pub coop: bool,
    pub time_limit: usize,
}

impl LbfConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let err = |m: String| Err(EnvError::Config(m));
        if !(5..=20).contains(&self.x_size) || !(5..=20).contains(&self.y_size) {
            return err(format!(
                "grid {}x{} outside 5..=20",
                self.x_size, self.y_size
            ));
        }
        if !(2..=5).contains(&self.n_agents) {
            return err(format!("{} agents outside 2..=5", self.n_agents));
        }
        if !(1..=10).contains(&self.n_food) {
            return err(format!("{} food outside 1..=10", self.n_food));
        }
        if self.coop && self.n_agents > 4 {
            return err("cooperative mode supports at most 4 agents".into());
        }
        if self.time_limit == 0 {
            return err("time limit must be positive".into());
        }
        Ok(())
    }

    pub fn observation_len(&self) -> usize {
        3 * (self.n_food + self.n_agents)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    Agent,
    Food,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LbfEntity {
    pub x: i32,
    pub y: i32,
    pub level: u32,
    pub kind: EntityKind,
    /// Always true for agents; false once a food item is collected.
    pub alive: bool,
}

impl LbfEntity {
    fn chebyshev(&self, other: &LbfEntity) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    fn manhattan(&self, other: &LbfEntity) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

/// Reward of one loading agent for one collected item.
pub fn lbf_reward(
    food_level: f64,
    agent_level: f64,
    sum_food_levels: f64,
    sum_loading_levels: f64,
) -> Result<f64, EnvError> {
    let denom = sum_food_levels * sum_loading_levels;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(EnvError::Config(format!(
            "reward denominator must be positive, got {denom}"
        )));
    }
    Ok(food_level * agent_level / denom)
}

#[derive(Debug, Clone)]
pub struct LevelBasedForaging {
    config: LbfConfig,
    agents: Vec<LbfEntity>,
    food: Vec<LbfEntity>,
    sum_food_levels: u32,
    clock: EpisodeClock,
    phase: Phase,
    action_space: ActionSpace,
    observation_space: ObservationSpace,
}

impl LevelBasedForaging {
    pub fn new(config: LbfConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.n_agents;
        let obs_len = config.observation_len();
        Ok(Self {
            clock: EpisodeClock::new(config.time_limit)?,
            action_space: ActionSpace::uniform(n, LBF_N_ACTIONS),
            observation_space: ObservationSpace::new(vec![obs_len; n]),
            agents: Vec::new(),
            food: Vec::new(),
            sum_food_levels: 0,
            phase: Phase::Fresh,
            config,
        })
    }

    pub fn config(&self) -> &LbfConfig {
        &self.config
    }

    pub fn agents(&self) -> &[LbfEntity] {
        &self.agents
    }

    pub fn food(&self) -> &[LbfEntity] {
        &self.food
    }

    /// Installs an explicit state. Used for scripted scenarios and tests.
    pub fn set_state(
        &mut self,
        agents: &[(i32, i32, u32)],
        food: &[(i32, i32, u32)],
    ) -> Result<JointObservation, EnvError> {
        if agents.len() != self.config.n_agents || food.len() != self.config.n_food {
            return Err(EnvError::Config("entity counts do not match config".into()));
        }
        let mk = |&(x, y, level): &(i32, i32, u32), kind| LbfEntity {
            x,
            y,
            level,
            kind,
            alive: true,
        };
        let agents: Vec<_> = agents.iter().map(|a| mk(a, EntityKind::Agent)).collect();
        let food: Vec<_> = food.iter().map(|f| mk(f, EntityKind::Food)).collect();
        for e in agents.iter().chain(&food) {
            if !self.in_grid(e.x, e.y) || e.level == 0 {
                return Err(EnvError::Config(format!("invalid entity {e:?}")));
            }
        }
        let mut cells: Vec<(i32, i32)> = agents.iter().chain(&food).map(|e| (e.x, e.y)).collect();
        cells.sort_unstable();
        cells.dedup();
        if cells.len() != agents.len() + food.len() {
            return Err(EnvError::Config("entities overlap".into()));
        }
        self.sum_food_levels = food.iter().map(|f| f.level).sum();
        self.agents = agents;
        self.food = food;
        self.clock.reset();
        self.phase = Phase::Running;
        Ok(self.observe_all())
    }

    fn in_grid(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.config.x_size && (y as usize) < self.config.y_size
    }

    fn occupied(&self, x: i32, y: i32) -> bool {
        self.agents.iter().any(|a| a.x == x && a.y == y)
            || self.food.iter().any(|f| f.alive && f.x == x && f.y == y)
    }

    fn random_cell(&self, rng: &mut Rng) -> (i32, i32) {
        (
            rng.gen_range(0..self.config.x_size) as i32,
            rng.gen_range(0..self.config.y_size) as i32,
        )
    }

    fn spawn(&mut self, rng: &mut Rng) -> Result<(), EnvError> {
        self.agents.clear();
        self.food.clear();
        let agent_levels: Vec<u32> = (0..self.config.n_agents)
            .map(|_| rng.gen_range(1..=2))
            .collect();
        let total_agent_level: u32 = agent_levels.iter().sum();
        let max_food_level = total_agent_level.min(4);

        for i in 0..self.config.n_food {
            let level = if self.config.coop {
                total_agent_level
            } else {
                rng.gen_range(1..=max_food_level)
            };
            let mut placed = false;
            for _ in 0..SPAWN_ATTEMPTS {
                let (x, y) = self.random_cell(rng);
                let candidate = LbfEntity {
                    x,
                    y,
                    level,
                    kind: EntityKind::Food,
                    alive: true,
                };
                if self.food.iter().all(|f| f.chebyshev(&candidate) > 1) {
                    self.food.push(candidate);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(EnvError::Spawn(format!(
                    "food item {i} after {SPAWN_ATTEMPTS} attempts"
                )));
            }
        }

        for (i, &level) in agent_levels.iter().enumerate() {
            let mut placed = false;
            for _ in 0..SPAWN_ATTEMPTS {
                let (x, y) = self.random_cell(rng);
                if !self.occupied(x, y) {
                    self.agents.push(LbfEntity {
                        x,
                        y,
                        level,
                        kind: EntityKind::Agent,
                        alive: true,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(EnvError::Spawn(format!(
                    "agent {i} after {SPAWN_ATTEMPTS} attempts"
                )));
            }
        }
        self.sum_food_levels = self.food.iter().map(|f| f.level).sum();
        Ok(())
    }

    fn triplet(&self, observer: &LbfEntity, e: &LbfEntity) -> [f32; 3] {
        if !e.alive {
            return [-1.0, -1.0, 0.0];
        }
        match self.config.sight {
            Sight::Full => [e.x as f32, e.y as f32, e.level as f32],
            Sight::Radius(r) => {
                let r = r as i32;
                if observer.chebyshev(e) > r {
                    [-1.0, -1.0, 0.0]
                } else {
                    // Relative to the bottom-left corner of the window.
                    [
                        (e.x - observer.x + r) as f32,
                        (e.y - observer.y + r) as f32,
                        e.level as f32,
                    ]
                }
            }
        }
    }

    /// Observation of one agent: food triplets in item order, then the
    /// observer's own triplet, then the other agents in index order.
    pub fn observe(&self, agent: usize) -> Vec<f32> {
        let me = &self.agents[agent];
        let mut out = Vec::with_capacity(self.config.observation_len());
        for f in &self.food {
            out.extend(self.triplet(me, f));
        }
        out.extend(self.triplet(me, me));
        for (j, other) in self.agents.iter().enumerate() {
            if j != agent {
                out.extend(self.triplet(me, other));
            }
        }
        out
    }

    fn observe_all(&self) -> JointObservation {
        JointObservation::new((0..self.agents.len()).map(|i| self.observe(i)).collect())
    }

    fn move_agents(&mut self, actions: &[LbfAction]) {
        let targets: Vec<Option<(i32, i32)>> = self
            .agents
            .iter()
            .zip(actions)
            .map(|(a, act)| {
                let (dx, dy) = act.delta();
                if (dx, dy) == (0, 0) {
                    return None;
                }
                let (x, y) = (a.x + dx, a.y + dy);
                // Targets must be inside the grid and empty at the start of the tick.
                (self.in_grid(x, y) && !self.occupied(x, y)).then_some((x, y))
            })
            .collect();
        for (i, target) in targets.iter().enumerate() {
            let Some(cell) = target else { continue };
            let contested = targets
                .iter()
                .enumerate()
                .any(|(j, t)| j != i && t.as_ref() == Some(cell));
            if !contested {
                self.agents[i].x = cell.0;
                self.agents[i].y = cell.1;
            }
        }
    }

    fn load_food(&mut self, actions: &[LbfAction]) -> Result<Vec<f64>, EnvError> {
        let n = self.agents.len();
        let mut rewards = vec![0.0; n];
        // Each loading agent attaches to the first adjacent live item.
        let mut loaders: Vec<Vec<usize>> = vec![Vec::new(); self.food.len()];
        for (i, (agent, act)) in self.agents.iter().zip(actions).enumerate() {
            if *act != LbfAction::Pickup {
                continue;
            }
            if let Some(f) = self
                .food
                .iter()
                .position(|f| f.alive && agent.manhattan(f) == 1)
            {
                loaders[f].push(i);
            }
        }
        for (f, group) in loaders.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let loading_level: u32 = group.iter().map(|&i| self.agents[i].level).sum();
            let food_level = self.food[f].level;
            if loading_level < food_level {
                continue;
            }
            self.food[f].alive = false;
            for &i in group {
                rewards[i] += lbf_reward(
                    food_level as f64,
                    self.agents[i].level as f64,
                    self.sum_food_levels as f64,
                    loading_level as f64,
                )?;
            }
        }
        Ok(rewards)
    }
}

impl MultiAgentEnv for LevelBasedForaging {
    fn name(&self) -> String {
        let c = &self.config;
        format!(
            "Foraging{}-{}x{}-{}p-{}f{}-v1",
            match c.sight {
                Sight::Full => String::new(),
                Sight::Radius(r) => format!("-{r}s"),
            },
            c.x_size,
            c.y_size,
            c.n_agents,
            c.n_food,
            if c.coop { "-coop" } else { "" }
        )
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

    fn reset(&mut self, seed: u64) -> Result<JointObservation, EnvError> {
        let mut rng = rng_from_seed(seed);
        self.spawn(&mut rng)?;
        self.clock.reset();
        self.phase = Phase::Running;
        Ok(self.observe_all())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        self.phase.check_step()?;
        self.action_space.validate(actions)?;
        let actions: Vec<LbfAction> = actions
            .iter()
            .map(|&a| LbfAction::from_index(a).expect("validated"))
            .collect();
        self.move_agents(&actions);
        let rewards = self.load_food(&actions)?;
        let cleared = self.food.iter().all(|f| !f.alive);
        let expired = self.clock.tick();
        let done = cleared || expired;
        if done {
            self.phase = Phase::Finished;
        }
        let n = self.agents.len();
        Ok(StepResult {
            next_obs: self.observe_all(),
            rewards,
            dones: vec![done; n],
            info: step_info(&self.clock, expired && !cleared),
        })
    }

    fn render(&self) -> String {
        let (w, h) = (self.config.x_size as i32, self.config.y_size as i32);
        let mut out = String::new();
        for y in (0..h).rev() {
            for x in 0..w {
                let cell = if let Some(i) = self.agents.iter().position(|a| a.x == x && a.y == y) {
                    char::from(b'A' + i as u8)
                } else if let Some(f) = self.food.iter().find(|f| f.alive && f.x == x && f.y == y) {
                    char::from_digit(f.level.min(9), 10).unwrap_or('*')
                } else {
                    '.'
                };
                out.push(cell);
            }
            out.push('\n');
        }
        out
    }
}
