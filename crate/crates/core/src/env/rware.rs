//! Multi-Robot Warehouse.
//!
//! Robots drive a grid of shelf groups separated by highways, fetch requested
//! shelves to the goal cells on the bottom row and return them to free
//! storage cells. Row `y = 0` is the top of the warehouse; goals sit on the
//! last row. Moves are resolved simultaneously with [`resolve_collisions`].

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{
    step_info, ActionSpace, EnvError, EpisodeClock, JointObservation, MultiAgentEnv,
    ObservationSpace, Phase, StepResult, INFO_DELIVERIES,
};
use crate::rng::{rng_from_seed, Rng};

pub const RWARE_DEFAULT_TIME_LIMIT: usize = 500;
pub const RWARE_N_ACTIONS: usize = 4;
/// Shelves per group column.
pub const COLUMN_HEIGHT: usize = 8;
/// Observation length with the default 3x3 window.
pub const RWARE_OBS_LEN: usize = 8 + 9 * 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WarehouseSize {
    Tiny,
    Small,
    Medium,
    Large,
}

impl WarehouseSize {
    /// Rows and columns of shelf groups.
    pub fn groups(self) -> (usize, usize) {
        match self {
            WarehouseSize::Tiny => (1, 3),
            WarehouseSize::Small => (2, 3),
            WarehouseSize::Medium => (2, 5),
            WarehouseSize::Large => (3, 5),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WarehouseSize::Tiny => "tiny",
            WarehouseSize::Small => "small",
            WarehouseSize::Medium => "medium",
            WarehouseSize::Large => "large",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tiny" => Some(WarehouseSize::Tiny),
            "small" => Some(WarehouseSize::Small),
            "medium" => Some(WarehouseSize::Medium),
            "large" => Some(WarehouseSize::Large),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Difficulty {
    Normal,
    /// Twice as many requests as robots.
    Easy,
    /// Half as many requests as robots (at least one).
    Hard,
}

impl Difficulty {
    pub fn request_count(self, n_agents: usize) -> usize {
        match self {
            Difficulty::Normal => n_agents,
            Difficulty::Easy => 2 * n_agents,
            Difficulty::Hard => (n_agents / 2).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RwareConfig {
    pub size: WarehouseSize,
    pub n_agents: usize,
    pub difficulty: Difficulty,
    pub time_limit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heading {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Heading {
    fn left(self) -> Self {
        match self {
            Heading::Up => Heading::Left,
            Heading::Left => Heading::Down,
            Heading::Down => Heading::Right,
            Heading::Right => Heading::Up,
        }
    }

    fn right(self) -> Self {
        match self {
            Heading::Up => Heading::Right,
            Heading::Right => Heading::Down,
            Heading::Down => Heading::Left,
            Heading::Left => Heading::Up,
        }
    }

    fn delta(self) -> (i32, i32) {
        match self {
            Heading::Up => (0, -1),
            Heading::Down => (0, 1),
            Heading::Left => (-1, 0),
            Heading::Right => (1, 0),
        }
    }

    fn from_index(i: usize) -> Self {
        [Heading::Up, Heading::Down, Heading::Left, Heading::Right][i % 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RwareAction {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    ToggleLoad = 3,
}

impl RwareAction {
    pub fn from_index(i: usize) -> Option<Self> {
        use RwareAction::*;
        [TurnLeft, TurnRight, Forward, ToggleLoad].get(i).copied()
    }
}

pub type Cell = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Robot {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
    pub carrying: Option<usize>,
}

impl Robot {
    pub fn cell(&self) -> Cell {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shelf {
    pub x: i32,
    pub y: i32,
}

/// Static geometry: storage/highway partition and goal cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarehouseLayout {
    pub width: usize,
    pub height: usize,
    highway: Vec<bool>,
    pub goals: [Cell; 2],
}

impl WarehouseLayout {
    pub fn new(size: WarehouseSize) -> Self {
        let (rows, cols) = size.groups();
        let height = (COLUMN_HEIGHT + 1) * rows + 2;
        let width = 3 * cols + 1;
        let mut highway = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                highway[y * width + x] = x % 3 == 0
                    || y % (COLUMN_HEIGHT + 1) == 0
                    || y == height - 1
                    // Queue in front of the goals stays clear.
                    || (y + 4 > height && (x == width / 2 - 1 || x == width / 2));
            }
        }
        let goal_y = (height - 1) as i32;
        Self {
            width,
            height,
            highway,
            goals: [((width / 2 - 1) as i32, goal_y), ((width / 2) as i32, goal_y)],
        }
    }

    pub fn contains(&self, (x, y): Cell) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn is_highway(&self, (x, y): Cell) -> bool {
        self.highway[y as usize * self.width + x as usize]
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        self.goals.contains(&cell)
    }

    pub fn storage_cells(&self) -> Vec<Cell> {
        self.cells().filter(|&c| !self.is_highway(c)).collect()
    }

    pub fn highway_cells(&self) -> Vec<Cell> {
        self.cells().filter(|&c| self.is_highway(c)).collect()
    }

    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32).flat_map(move |y| (0..self.width as i32).map(move |x| (x, y)))
    }
}

/// Decides which robots move this tick.
///
/// `current[i]` is robot `i`'s cell and `targets[i]` either that cell or the
/// cell in front of it. Among robots claiming the same cell, a claimant whose
/// own cell is another mover's target wins; remaining ties go to the lowest
/// index. A winner moves when its target is free or vacated this tick. Two
/// robots swapping cells both stay; longer rotation cycles move.
pub fn resolve_collisions(current: &[Cell], targets: &[Cell]) -> Vec<bool> {
    let n = current.len();
    assert_eq!(n, targets.len(), "one target per robot");
    let wants: Vec<bool> = (0..n).map(|i| targets[i] != current[i]).collect();
    let occupant = |cell: Cell| current.iter().position(|&c| c == cell);
    let blocks_someone =
        |i: usize| (0..n).any(|j| j != i && wants[j] && targets[j] == current[i]);

    let mut moving = wants.clone();
    for i in 0..n {
        if !wants[i] {
            continue;
        }
        let rank = |k: usize| (!blocks_someone(k), k);
        let winner = (0..n)
            .filter(|&k| wants[k] && targets[k] == targets[i])
            .min_by_key(|&k| rank(k))
            .expect("claimant set contains i");
        if winner != i {
            moving[i] = false;
        }
    }
    for i in 0..n {
        if let Some(j) = occupant(targets[i]) {
            if moving[i] && moving[j] && targets[j] == current[i] && i != j {
                moving[i] = false;
                moving[j] = false;
            }
        }
    }
    // Greatest fixed point: stop any mover heading into a cell whose occupant stays.
    loop {
        let mut changed = false;
        for i in 0..n {
            if !moving[i] {
                continue;
            }
            if let Some(j) = occupant(targets[i]) {
                if !moving[j] {
                    moving[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    moving
}

#[derive(Debug, Clone)]
pub struct RobotWarehouse {
    config: RwareConfig,
    layout: WarehouseLayout,
    robots: Vec<Robot>,
    shelves: Vec<Shelf>,
    requests: Vec<usize>,
    n_requests: usize,
    deliveries: u64,
    rng: Rng,
    clock: EpisodeClock,
    phase: Phase,
    action_space: ActionSpace,
    observation_space: ObservationSpace,
}

impl RobotWarehouse {
    pub fn new(config: RwareConfig) -> Result<Self, EnvError> {
        if !(1..=20).contains(&config.n_agents) {
            return Err(EnvError::Config(format!(
                "{} robots outside 1..=20",
                config.n_agents
            )));
        }
        let layout = WarehouseLayout::new(config.size);
        let n_requests = config.difficulty.request_count(config.n_agents);
        let n_shelves = layout.storage_cells().len();
        if n_requests >= n_shelves {
            return Err(EnvError::Config(format!(
                "{n_requests} requests need more than {n_shelves} shelves"
            )));
        }
        if config.n_agents > layout.highway_cells().len() {
            return Err(EnvError::Config("more robots than highway cells".into()));
        }
        let n = config.n_agents;
        Ok(Self {
            clock: EpisodeClock::new(config.time_limit)?,
            action_space: ActionSpace::uniform(n, RWARE_N_ACTIONS),
            observation_space: ObservationSpace::new(vec![RWARE_OBS_LEN; n]),
            layout,
            robots: Vec::new(),
            shelves: Vec::new(),
            requests: Vec::new(),
            n_requests,
            deliveries: 0,
            rng: rng_from_seed(0),
            phase: Phase::Fresh,
            config,
        })
    }

    pub fn layout(&self) -> &WarehouseLayout {
        &self.layout
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn shelves(&self) -> &[Shelf] {
        &self.shelves
    }

    pub fn requests(&self) -> &[usize] {
        &self.requests
    }

    pub fn deliveries(&self) -> u64 {
        self.deliveries
    }

    /// Installs an explicit state: robots, shelves and the request list.
    pub fn set_state(
        &mut self,
        robots: Vec<Robot>,
        shelves: Vec<Shelf>,
        requests: Vec<usize>,
        seed: u64,
    ) -> Result<JointObservation, EnvError> {
        if robots.len() != self.config.n_agents {
            return Err(EnvError::Config("robot count does not match config".into()));
        }
        if requests.iter().any(|&r| r >= shelves.len()) {
            return Err(EnvError::Config("request for unknown shelf".into()));
        }
        self.robots = robots;
        self.shelves = shelves;
        self.n_requests = requests.len();
        self.requests = requests;
        self.deliveries = 0;
        self.rng = rng_from_seed(seed);
        self.clock.reset();
        self.phase = Phase::Running;
        Ok(self.observe_all())
    }

    fn robot_at(&self, cell: Cell) -> Option<usize> {
        self.robots.iter().position(|r| r.cell() == cell)
    }

    /// Shelf resting at `cell` that no robot carries.
    fn stationary_shelf_at(&self, cell: Cell) -> Option<usize> {
        self.shelves.iter().enumerate().position(|(s, sh)| {
            (sh.x, sh.y) == cell && !self.robots.iter().any(|r| r.carrying == Some(s))
        })
    }

    fn shelf_at(&self, cell: Cell) -> Option<usize> {
        self.shelves.iter().position(|sh| (sh.x, sh.y) == cell)
    }

    fn observe(&self, agent: usize) -> Vec<f32> {
        let me = &self.robots[agent];
        let mut out = Vec::with_capacity(RWARE_OBS_LEN);
        out.extend([me.x as f32, me.y as f32, me.carrying.is_some() as u8 as f32]);
        let mut heading = [0.0f32; 4];
        heading[me.heading as usize] = 1.0;
        out.extend(heading);
        out.push(self.layout.is_highway(me.cell()) as u8 as f32);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let cell = (me.x + dx, me.y + dy);
                let inside = self.layout.contains(cell);
                match inside.then(|| self.robot_at(cell)).flatten() {
                    Some(r) => {
                        let mut h = [0.0f32; 4];
                        h[self.robots[r].heading as usize] = 1.0;
                        out.push(1.0);
                        out.extend(h);
                    }
                    // An empty cell sets the first heading slot, matching the
                    // reference observation layout.
                    None => out.extend([0.0, 1.0, 0.0, 0.0, 0.0]),
                }
                match inside.then(|| self.shelf_at(cell)).flatten() {
                    Some(s) => out.extend([1.0, self.requests.contains(&s) as u8 as f32]),
                    None => out.extend([0.0, 0.0]),
                }
            }
        }
        out
    }

    fn observe_all(&self) -> JointObservation {
        JointObservation::new((0..self.robots.len()).map(|i| self.observe(i)).collect())
    }

    /// Uniformly draws a shelf that is not currently requested.
    pub fn sample_new_request(&mut self) -> Result<usize, EnvError> {
        sample_new_request(&self.requests, self.shelves.len(), &mut self.rng)
    }

    fn deliver(&mut self) -> Result<u64, EnvError> {
        let mut delivered = 0;
        for i in 0..self.robots.len() {
            let robot = self.robots[i];
            let Some(shelf) = robot.carrying else { continue };
            if !self.layout.is_goal(robot.cell()) {
                continue;
            }
            let Some(slot) = self.requests.iter().position(|&r| r == shelf) else {
                continue;
            };
            let replacement = self.sample_new_request()?;
            self.requests[slot] = replacement;
            delivered += 1;
        }
        Ok(delivered)
    }
}

/// Uniform draw over shelves `0..n_shelves` that are not in `requested`.
pub fn sample_new_request(
    requested: &[usize],
    n_shelves: usize,
    rng: &mut Rng,
) -> Result<usize, EnvError> {
    let candidates: Vec<usize> = (0..n_shelves).filter(|s| !requested.contains(s)).collect();
    candidates
        .choose(rng)
        .copied()
        .ok_or_else(|| EnvError::Config("every shelf is already requested".into()))
}

impl MultiAgentEnv for RobotWarehouse {
    fn name(&self) -> String {
        let diff = match self.config.difficulty {
            Difficulty::Normal => "",
            Difficulty::Easy => "-easy",
            Difficulty::Hard => "-hard",
        };
        format!(
            "rware-{}-{}ag{}-v1",
            self.config.size.as_str(),
            self.config.n_agents,
            diff
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
        self.shelves = self
            .layout
            .storage_cells()
            .into_iter()
            .map(|(x, y)| Shelf { x, y })
            .collect();
        let highways = self.layout.highway_cells();
        let spots: Vec<Cell> = highways
            .choose_multiple(&mut rng, self.config.n_agents)
            .copied()
            .collect();
        self.robots = spots
            .into_iter()
            .map(|(x, y)| Robot {
                x,
                y,
                heading: Heading::from_index(rng.gen_range(0..4)),
                carrying: None,
            })
            .collect();
        self.requests = rand::seq::index::sample(&mut rng, self.shelves.len(), self.n_requests)
            .into_vec();
        self.rng = rng;
        self.deliveries = 0;
        self.clock.reset();
        self.phase = Phase::Running;
        Ok(self.observe_all())
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        self.phase.check_step()?;
        self.action_space.validate(actions)?;
        let actions: Vec<RwareAction> = actions
            .iter()
            .map(|&a| RwareAction::from_index(a).expect("validated"))
            .collect();

        let current: Vec<Cell> = self.robots.iter().map(Robot::cell).collect();
        let targets: Vec<Cell> = self
            .robots
            .iter()
            .zip(&actions)
            .map(|(r, act)| {
                if *act != RwareAction::Forward {
                    return r.cell();
                }
                let (dx, dy) = r.heading.delta();
                let next = (r.x + dx, r.y + dy);
                if !self.layout.contains(next) {
                    return r.cell();
                }
                // A laden robot cannot pass under a resting shelf.
                if r.carrying.is_some() && self.stationary_shelf_at(next).is_some() {
                    return r.cell();
                }
                next
            })
            .collect();
        let moves = resolve_collisions(&current, &targets);
        for (i, robot) in self.robots.iter_mut().enumerate() {
            if moves[i] {
                robot.x = targets[i].0;
                robot.y = targets[i].1;
                if let Some(s) = robot.carrying {
                    self.shelves[s] = Shelf {
                        x: robot.x,
                        y: robot.y,
                    };
                }
            }
        }

        for i in 0..self.robots.len() {
            match actions[i] {
                RwareAction::TurnLeft => self.robots[i].heading = self.robots[i].heading.left(),
                RwareAction::TurnRight => self.robots[i].heading = self.robots[i].heading.right(),
                RwareAction::Forward => {}
                RwareAction::ToggleLoad => {
                    let cell = self.robots[i].cell();
                    match self.robots[i].carrying {
                        None => {
                            if let Some(s) = self.stationary_shelf_at(cell) {
                                self.robots[i].carrying = Some(s);
                            }
                        }
                        Some(_) => {
                            let free = self.stationary_shelf_at(cell).is_none();
                            if free && !self.layout.is_highway(cell) {
                                self.robots[i].carrying = None;
                            }
                        }
                    }
                }
            }
        }

        let delivered = self.deliver()?;
        self.deliveries += delivered;
        let done = self.clock.tick();
        if done {
            self.phase = Phase::Finished;
        }
        let n = self.robots.len();
        let mut info = step_info(&self.clock, done);
        info.insert(INFO_DELIVERIES.to_string(), self.deliveries as f64);
        Ok(StepResult {
            next_obs: self.observe_all(),
            rewards: vec![delivered as f64; n],
            dones: vec![done; n],
            info,
        })
    }

    fn render(&self) -> String {
        let mut out = String::new();
        for y in 0..self.layout.height as i32 {
            for x in 0..self.layout.width as i32 {
                let c = if let Some(r) = self.robot_at((x, y)) {
                    let ch = char::from(b'a' + (r as u8 % 26));
                    if self.robots[r].carrying.is_some() {
                        ch.to_ascii_uppercase()
                    } else {
                        ch
                    }
                } else if let Some(s) = self.shelf_at((x, y)) {
                    if self.requests.contains(&s) {
                        '$'
                    } else {
                        '#'
                    }
                } else if self.layout.is_goal((x, y)) {
                    'G'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize) -> RobotWarehouse {
        RobotWarehouse::new(RwareConfig {
            size: WarehouseSize::Tiny,
            n_agents: n,
            difficulty: Difficulty::Normal,
            time_limit: RWARE_DEFAULT_TIME_LIMIT,
        })
        .unwrap()
    }

    #[test]
    fn layout_dimensions() {
        let l = WarehouseLayout::new(WarehouseSize::Tiny);
        assert_eq!((l.width, l.height), (10, 11));
        assert_eq!(l.goals, [(4, 10), (5, 10)]);
        assert!(l.goals.iter().all(|&g| l.is_highway(g)));
        assert_eq!(l.storage_cells().len() + l.highway_cells().len(), 110);
        let s = WarehouseLayout::new(WarehouseSize::Small);
        assert_eq!((s.width, s.height), (10, 20));
    }

    #[test]
    fn request_count_by_difficulty() {
        assert_eq!(Difficulty::Normal.request_count(4), 4);
        assert_eq!(Difficulty::Easy.request_count(4), 8);
        assert_eq!(Difficulty::Hard.request_count(4), 2);
        assert_eq!(Difficulty::Hard.request_count(1), 1);
    }

    #[test]
    fn chain_moves_together() {
        let current = [(0, 0), (1, 0), (2, 0)];
        let targets = [(1, 0), (2, 0), (3, 0)];
        assert_eq!(resolve_collisions(&current, &targets), vec![true; 3]);
    }

    #[test]
    fn contested_free_cell_goes_to_lower_index() {
        let current = [(0, 1), (2, 1)];
        let targets = [(1, 1), (1, 1)];
        assert_eq!(resolve_collisions(&current, &targets), vec![true, false]);
    }

    #[test]
    fn blocking_claimant_has_priority() {
        // Robot 2 wants robot 1's cell, so robot 1 wins the contest for (1, 1).
        let current = [(0, 1), (2, 1), (3, 1)];
        let targets = [(1, 1), (1, 1), (2, 1)];
        assert_eq!(resolve_collisions(&current, &targets), vec![false, true, true]);
    }

    #[test]
    fn head_on_swap_stays() {
        let current = [(0, 0), (1, 0)];
        let targets = [(1, 0), (0, 0)];
        assert_eq!(resolve_collisions(&current, &targets), vec![false, false]);
    }

    #[test]
    fn blocked_by_stationary_robot() {
        let current = [(0, 0), (1, 0)];
        let targets = [(1, 0), (1, 0)];
        assert_eq!(resolve_collisions(&current, &targets), vec![false, false]);
    }

    #[test]
    fn rotation_cycle_moves() {
        let current = [(0, 0), (1, 0), (1, 1), (0, 1)];
        let targets = [(1, 0), (1, 1), (0, 1), (0, 0)];
        assert_eq!(resolve_collisions(&current, &targets), vec![true; 4]);
    }

    /// The robot/shelf state behind the reference observation of robot 0.
    fn reference_state() -> RobotWarehouse {
        let mut env = tiny(2);
        let layout = env.layout().clone();
        let shelves: Vec<Shelf> = layout
            .storage_cells()
            .into_iter()
            .map(|(x, y)| Shelf { x, y })
            .collect();
        let requested = shelves.iter().position(|s| (s.x, s.y) == (8, 2)).unwrap();
        let robots = vec![
            Robot {
                x: 8,
                y: 3,
                heading: Heading::Down,
                carrying: None,
            },
            Robot {
                x: 7,
                y: 4,
                heading: Heading::Up,
                carrying: None,
            },
        ];
        env.set_state(robots, shelves, vec![requested, 0], 0).unwrap();
        env
    }

    #[test]
    fn observation_matches_reference_array() {
        let env = reference_state();
        let expected: Vec<f32> = vec![
            8., 3., 0., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.,
            1., 0., 1., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 1., 0., 1., 0., 1., 0., 0., 1.,
            0., 0., 1., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 1.,
            0., 0., 1., 0., 0., 0., 0., 0.,
        ];
        assert_eq!(expected.len(), RWARE_OBS_LEN);
        assert_eq!(env.observe(0), expected);
    }

    #[test]
    fn isolated_robot_sees_only_itself_and_shelves() {
        let mut env = tiny(1);
        let robots = vec![Robot {
            x: 0,
            y: 0,
            heading: Heading::Right,
            carrying: None,
        }];
        env.set_state(robots, vec![Shelf { x: 5, y: 5 }, Shelf { x: 7, y: 7 }], vec![0], 0)
            .unwrap();
        let obs = env.observe(0);
        for cell in 0..9 {
            let group = &obs[8 + cell * 7..8 + (cell + 1) * 7];
            if cell == 4 {
                assert_eq!(group, &[1., 0., 0., 0., 1., 0., 0.]);
            } else {
                assert_eq!(group, &[0., 1., 0., 0., 0., 0., 0.]);
            }
        }
    }

    #[test]
    fn load_on_empty_cell_is_noop() {
        let mut env = tiny(1);
        env.set_state(
            vec![Robot {
                x: 0,
                y: 0,
                heading: Heading::Down,
                carrying: None,
            }],
            vec![Shelf { x: 1, y: 1 }, Shelf { x: 2, y: 1 }],
            vec![0],
            0,
        )
        .unwrap();
        let r = env.step(&[RwareAction::ToggleLoad as usize]).unwrap();
        assert_eq!(r.rewards, vec![0.0]);
        assert_eq!(env.robots()[0].carrying, None);
    }

    #[test]
    fn delivery_scores_and_replaces_request() {
        let mut env = tiny(2);
        // Robot 0 carries requested shelf 0 one step above a goal.
        let robots = vec![
            Robot {
                x: 4,
                y: 9,
                heading: Heading::Down,
                carrying: Some(0),
            },
            Robot {
                x: 0,
                y: 0,
                heading: Heading::Up,
                carrying: None,
            },
        ];
        let shelves = vec![
            Shelf { x: 4, y: 9 },
            Shelf { x: 1, y: 1 },
            Shelf { x: 2, y: 1 },
        ];
        env.set_state(robots, shelves, vec![0, 1], 3).unwrap();
        let r = env.step(&[RwareAction::Forward as usize, 0]).unwrap();
        assert_eq!(r.rewards, vec![1.0, 1.0]);
        assert_eq!(r.info[INFO_DELIVERIES], 1.0);
        assert_eq!(env.requests().len(), 2);
        assert!(!env.requests().contains(&0));
        assert!(env.requests().contains(&2));
    }

    #[test]
    fn laden_robot_cannot_enter_shelf_cell() {
        let mut env = tiny(1);
        env.set_state(
            vec![Robot {
                x: 1,
                y: 0,
                heading: Heading::Down,
                carrying: Some(0),
            }],
            vec![Shelf { x: 1, y: 0 }, Shelf { x: 1, y: 1 }],
            vec![1],
            0,
        )
        .unwrap();
        env.step(&[RwareAction::Forward as usize]).unwrap();
        assert_eq!(env.robots()[0].cell(), (1, 0));
        // Unladen robots drive under shelves.
        env.step(&[RwareAction::ToggleLoad as usize]).unwrap();
        assert_eq!(env.robots()[0].carrying, Some(0));
    }

    #[test]
    fn unload_only_on_free_storage() {
        let mut env = tiny(1);
        env.set_state(
            vec![Robot {
                x: 1,
                y: 1,
                heading: Heading::Up,
                carrying: Some(0),
            }],
            vec![Shelf { x: 1, y: 1 }, Shelf { x: 2, y: 1 }],
            vec![1],
            0,
        )
        .unwrap();
        env.step(&[RwareAction::Forward as usize]).unwrap();
        assert_eq!(env.robots()[0].cell(), (1, 0));
        env.step(&[RwareAction::ToggleLoad as usize]).unwrap();
        assert_eq!(env.robots()[0].carrying, Some(0), "highway: cannot unload");
        env.step(&[RwareAction::TurnLeft as usize]).unwrap();
        env.step(&[RwareAction::TurnLeft as usize]).unwrap();
        env.step(&[RwareAction::Forward as usize]).unwrap();
        env.step(&[RwareAction::ToggleLoad as usize]).unwrap();
        assert_eq!(env.robots()[0].carrying, None);
        assert_eq!(env.shelves()[0], Shelf { x: 1, y: 1 });
    }

    #[test]
    fn sampling_forced_choice() {
        let mut rng = rng_from_seed(0);
        assert_eq!(sample_new_request(&[0, 1, 3], 4, &mut rng).unwrap(), 2);
        assert!(sample_new_request(&[0, 1], 2, &mut rng).is_err());
    }

    #[test]
    fn episode_lasts_500_steps() {
        let mut env = tiny(2);
        env.reset(4).unwrap();
        let mut rng = rng_from_seed(1);
        for t in 1..=RWARE_DEFAULT_TIME_LIMIT {
            let a = env.action_space().sample(&mut rng);
            let r = env.step(&a).unwrap();
            assert_eq!(r.all_done(), t == RWARE_DEFAULT_TIME_LIMIT);
        }
        assert_eq!(env.step(&[0, 0]), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn turning_everywhere_earns_nothing() {
        let mut env = tiny(4);
        env.reset(2).unwrap();
        for _ in 0..50 {
            let r = env.step(&[0, 0, 0, 0]).unwrap();
            assert_eq!(r.rewards, vec![0.0; 4]);
        }
    }
}
