//! Fully observed MiniGrid-style worlds: Door & Key and two-room MultiRoom.
//!
//! The agent has a heading and five actions. Every step costs -0.1 except the
//! step that enters the goal, which pays +4.0 and ends the episode. Nothing is
//! paid for picking up the key or opening a door.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Action, ActionSpec, EnvError, Environment, Observation, StepOutcome};

pub const STEP_REWARD: f64 = -0.1;
pub const GOAL_REWARD: f64 = 4.0;
pub const DEFAULT_TURN_LIMIT: usize = 1000;
/// Every DoorKey size encodes into this grid so transferred networks line up.
pub const DOORKEY_ENCODE_SIZE: usize = 8;

const CHANNELS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Floor,
    Wall,
    Key,
    Door { locked: bool, open: bool },
    Goal,
}

impl Cell {
    fn channel(self) -> usize {
        match self {
            Cell::Wall => 0,
            Cell::Floor => 1,
            Cell::Key => 2,
            Cell::Door { locked: true, .. } => 3,
            Cell::Door { open: false, .. } => 4,
            Cell::Door { open: true, .. } => 5,
            Cell::Goal => 6,
        }
    }

    fn passable(self) -> bool {
        matches!(self, Cell::Floor | Cell::Goal | Cell::Door { open: true, .. })
    }

    fn to_char(self) -> char {
        match self {
            Cell::Floor => '.',
            Cell::Wall => '#',
            Cell::Key => 'K',
            Cell::Door { locked: true, .. } => 'L',
            Cell::Door { open: false, .. } => 'D',
            Cell::Door { open: true, .. } => 'O',
            Cell::Goal => 'G',
        }
    }
}

/// Headings in clockwise order starting east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heading {
    East,
    South,
    West,
    North,
}

impl Heading {
    const ALL: [Heading; 4] = [Heading::East, Heading::South, Heading::West, Heading::North];

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
            Heading::North => (0, -1),
        }
    }

    fn left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    fn right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    fn to_char(self) -> char {
        match self {
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
            Heading::North => '^',
        }
    }

    fn from_char(c: char) -> Option<Self> {
        match c {
            '>' => Some(Heading::East),
            'v' => Some(Heading::South),
            '<' => Some(Heading::West),
            '^' => Some(Heading::North),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum GridAction {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Toggle = 4,
}

impl GridAction {
    pub const COUNT: usize = 5;

    fn from_index(i: usize) -> Self {
        match i {
            0 => Self::TurnLeft,
            1 => Self::TurnRight,
            2 => Self::Forward,
            3 => Self::Pickup,
            _ => Self::Toggle,
        }
    }
}

/// How `reset` produces the initial layout.
#[derive(Debug, Clone, PartialEq)]
pub enum LayoutSource {
    /// Door & Key of the given outer size (walls included).
    DoorKey { size: usize },
    /// Two rooms joined by a closed, unlocked door.
    TwoRooms { size: usize },
    /// A fixed layout restored verbatim on every reset.
    Fixed(Box<GridState>),
}

/// Complete dynamic state of a grid world.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    pub agent: (usize, usize),
    pub heading: Heading,
    pub carrying_key: bool,
}

impl GridState {
    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    fn set(&mut self, x: usize, y: usize, cell: Cell) {
        self.cells[y * self.width + x] = cell;
    }

    fn front(&self) -> Option<(usize, usize)> {
        let (dx, dy) = self.heading.delta();
        let x = self.agent.0 as i64 + dx;
        let y = self.agent.1 as i64 + dy;
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some((x as usize, y as usize))
        }
    }

    /// One char per cell; the agent is drawn as its heading arrow and is
    /// assumed to stand on floor when parsed back.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == self.agent {
                    out.push(self.heading.to_char());
                } else {
                    out.push(self.cell(x, y).to_char());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.first().map(|r| r.chars().count()).unwrap_or(0);
        if width == 0 {
            return Err(EnvError::Layout("empty layout".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut agent = None;
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Layout(format!("row {y} has the wrong width")));
            }
            for (x, c) in row.chars().enumerate() {
                let cell = match c {
                    '.' => Cell::Floor,
                    '#' => Cell::Wall,
                    'K' => Cell::Key,
                    'L' => Cell::Door { locked: true, open: false },
                    'D' => Cell::Door { locked: false, open: false },
                    'O' => Cell::Door { locked: false, open: true },
                    'G' => Cell::Goal,
                    other => match Heading::from_char(other) {
                        Some(h) => {
                            if agent.replace(((x, y), h)).is_some() {
                                return Err(EnvError::Layout("more than one agent".into()));
                            }
                            Cell::Floor
                        }
                        None => return Err(EnvError::Layout(format!("unknown cell {other:?}"))),
                    },
                };
                cells.push(cell);
            }
        }
        let ((ax, ay), heading) = agent.ok_or_else(|| EnvError::Layout("no agent".into()))?;
        if cells.iter().filter(|&&c| c == Cell::Goal).count() != 1 {
            return Err(EnvError::Layout("layout needs exactly one goal".into()));
        }
        Ok(Self { width, height, cells, agent: (ax, ay), heading, carrying_key: false })
    }
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    source: LayoutSource,
    encode_size: usize,
    turn_limit: usize,
    state: GridState,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn door_key(size: usize) -> Self {
        assert!((5..=DOORKEY_ENCODE_SIZE).contains(&size), "DoorKey size must be in 5..=8");
        Self::new(LayoutSource::DoorKey { size }, DOORKEY_ENCODE_SIZE, DEFAULT_TURN_LIMIT)
    }

    pub fn two_rooms(size: usize) -> Self {
        assert!(size >= 5, "MultiRoom size must be at least 5");
        Self::new(LayoutSource::TwoRooms { size }, size, DEFAULT_TURN_LIMIT)
    }

    pub fn fixed(layout: GridState, encode_size: usize) -> Self {
        Self::new(LayoutSource::Fixed(Box::new(layout)), encode_size, DEFAULT_TURN_LIMIT)
    }

    pub fn new(source: LayoutSource, encode_size: usize, turn_limit: usize) -> Self {
        let mut world = Self {
            source,
            encode_size,
            turn_limit,
            state: GridState {
                width: 0,
                height: 0,
                cells: Vec::new(),
                agent: (0, 0),
                heading: Heading::East,
                carrying_key: false,
            },
            steps: 0,
            done: false,
        };
        world.reset(0);
        assert!(
            world.state.width <= encode_size && world.state.height <= encode_size,
            "grid does not fit the encoding"
        );
        world
    }

    pub fn with_turn_limit(mut self, turn_limit: usize) -> Self {
        self.turn_limit = turn_limit;
        self
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn source(&self) -> &LayoutSource {
        &self.source
    }

    pub fn encode(&self) -> Vec<f64> {
        let e = self.encode_size;
        let mut v = vec![0.0; observation_len(e)];
        let s = &self.state;
        for y in 0..s.height {
            for x in 0..s.width {
                let pos = y * e + x;
                v[pos * CHANNELS + s.cell(x, y).channel()] = 1.0;
            }
        }
        let base = e * e * CHANNELS;
        v[base + s.agent.1 * e + s.agent.0] = 1.0;
        v[base + e * e + s.heading.index()] = 1.0;
        if s.carrying_key {
            v[base + e * e + 4] = 1.0;
        }
        v
    }

    /// Shortest action sequence that reaches the goal from the current state,
    /// found by breadth-first search over simulated steps.
    pub fn plan_shortest(&self) -> Option<Vec<usize>> {
        let start = self.state.clone();
        let mut parent: HashMap<GridState, (GridState, usize)> = HashMap::new();
        let mut queue = VecDeque::from([start.clone()]);
        let mut seen = std::collections::HashSet::from([start.clone()]);
        while let Some(s) = queue.pop_front() {
            for a in 0..GridAction::COUNT {
                let (next, reached_goal) = transition(&s, GridAction::from_index(a));
                if reached_goal {
                    let mut plan = vec![a];
                    let mut cur = s.clone();
                    while let Some((prev, pa)) = parent.get(&cur) {
                        plan.push(*pa);
                        cur = prev.clone();
                    }
                    plan.reverse();
                    return Some(plan);
                }
                if seen.insert(next.clone()) {
                    parent.insert(next.clone(), (s.clone(), a));
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> GridState {
        match &self.source {
            LayoutSource::Fixed(layout) => (**layout).clone(),
            LayoutSource::DoorKey { size } => generate_door_key(*size, rng),
            LayoutSource::TwoRooms { size } => generate_two_rooms(*size, rng),
        }
    }
}

pub fn observation_len(encode_size: usize) -> usize {
    encode_size * encode_size * (CHANNELS + 1) + 5
}

/// Pure transition function; returns the new state and whether the goal was entered.
fn transition(s: &GridState, action: GridAction) -> (GridState, bool) {
    let mut n = s.clone();
    match action {
        GridAction::TurnLeft => n.heading = s.heading.left(),
        GridAction::TurnRight => n.heading = s.heading.right(),
        GridAction::Forward => {
            if let Some((x, y)) = s.front() {
                let cell = s.cell(x, y);
                if cell.passable() {
                    n.agent = (x, y);
                    return (n, cell == Cell::Goal);
                }
            }
        }
        GridAction::Pickup => {
            if let Some((x, y)) = s.front() {
                if s.cell(x, y) == Cell::Key && !s.carrying_key {
                    n.carrying_key = true;
                    n.set(x, y, Cell::Floor);
                }
            }
        }
        GridAction::Toggle => {
            if let Some((x, y)) = s.front() {
                if let Cell::Door { locked, open } = s.cell(x, y) {
                    if locked {
                        if s.carrying_key {
                            n.set(x, y, Cell::Door { locked: false, open: true });
                        }
                    } else {
                        n.set(x, y, Cell::Door { locked: false, open: !open });
                    }
                }
            }
        }
    }
    (n, false)
}

fn walled(size_w: usize, size_h: usize) -> Vec<Cell> {
    let mut cells = vec![Cell::Floor; size_w * size_h];
    for y in 0..size_h {
        for x in 0..size_w {
            if x == 0 || y == 0 || x == size_w - 1 || y == size_h - 1 {
                cells[y * size_w + x] = Cell::Wall;
            }
        }
    }
    cells
}

fn random_heading(rng: &mut ChaCha8Rng) -> Heading {
    Heading::ALL[rng.gen_range(0..4)]
}

fn pick_cell(
    rng: &mut ChaCha8Rng,
    xs: std::ops::Range<usize>,
    ys: std::ops::Range<usize>,
    taken: &[(usize, usize)],
) -> (usize, usize) {
    loop {
        let p = (rng.gen_range(xs.clone()), rng.gen_range(ys.clone()));
        if !taken.contains(&p) {
            return p;
        }
    }
}

/// Dividing wall at a seeded column, locked door at a seeded row, key and
/// agent on the left, goal on the right.
fn generate_door_key(size: usize, rng: &mut ChaCha8Rng) -> GridState {
    let mut cells = walled(size, size);
    let split = rng.gen_range(2..size - 2);
    for y in 0..size {
        cells[y * size + split] = Cell::Wall;
    }
    let door_y = rng.gen_range(1..size - 1);
    cells[door_y * size + split] = Cell::Door { locked: true, open: false };
    let goal = pick_cell(rng, split + 1..size - 1, 1..size - 1, &[]);
    cells[goal.1 * size + goal.0] = Cell::Goal;
    let agent = pick_cell(rng, 1..split, 1..size - 1, &[]);
    let key = pick_cell(rng, 1..split, 1..size - 1, &[agent]);
    cells[key.1 * size + key.0] = Cell::Key;
    GridState { width: size, height: size, cells, agent, heading: random_heading(rng), carrying_key: false }
}

/// Two rooms split by a wall whose orientation and position are seeded; the
/// closed door can be opened without a key.
fn generate_two_rooms(size: usize, rng: &mut ChaCha8Rng) -> GridState {
    let mut cells = walled(size, size);
    let split = rng.gen_range(2..size - 2);
    let door = rng.gen_range(1..size - 1);
    let vertical = rng.gen_bool(0.5);
    let at = |along: usize, across: usize| if vertical { along * size + across } else { across * size + along };
    for i in 0..size {
        cells[at(i, split)] = Cell::Wall;
    }
    cells[at(door, split)] = Cell::Door { locked: false, open: false };
    // in (along, across) coordinates room A is across < split
    let (ga, gc) = pick_cell(rng, 1..size - 1, split + 1..size - 1, &[]);
    cells[at(ga, gc)] = Cell::Goal;
    let (aa, ac) = pick_cell(rng, 1..size - 1, 1..split, &[]);
    let agent = if vertical { (ac, aa) } else { (aa, ac) };
    GridState { width: size, height: size, cells, agent, heading: random_heading(rng), carrying_key: false }
}

impl Environment for GridWorld {
    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { count: GridAction::COUNT }
    }

    fn observation_dim(&self) -> usize {
        observation_len(self.encode_size)
    }

    fn turn_limit(&self) -> usize {
        self.turn_limit
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.generate(&mut rng);
        self.steps = 0;
        self.done = false;
        Observation::vector(self.encode())
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        self.action_spec().validate(action)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let a = GridAction::from_index(action.index().unwrap_or_default());
        let (next, reached_goal) = transition(&self.state, a);
        self.state = next;
        self.steps += 1;
        let truncated = !reached_goal && self.steps >= self.turn_limit;
        self.done = reached_goal || truncated;
        Ok(StepOutcome {
            reward: if reached_goal { GOAL_REWARD } else { STEP_REWARD },
            next_observation: Observation::vector(self.encode()),
            terminal: reached_goal,
            truncated,
        })
    }
}
