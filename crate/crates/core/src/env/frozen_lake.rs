use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Action, ActionSpec, EnvError, Environment, Observation, StepOutcome};
use crate::oracle::{TabularModel, Transition};

pub const STANDARD_MAP: [&str; 4] = ["SFFF", "FHFH", "FFFH", "HFFG"];

pub const LEFT: usize = 0;
pub const DOWN: usize = 1;
pub const RIGHT: usize = 2;
pub const UP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LakeCell {
    Start,
    Frozen,
    Hole,
    Goal,
}

impl LakeCell {
    fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Self::Start),
            'F' => Some(Self::Frozen),
            'H' => Some(Self::Hole),
            'G' => Some(Self::Goal),
            _ => None,
        }
    }

    fn to_char(self) -> char {
        match self {
            Self::Start => 'S',
            Self::Frozen => 'F',
            Self::Hole => 'H',
            Self::Goal => 'G',
        }
    }

    fn is_terminal(self) -> bool {
        matches!(self, Self::Hole | Self::Goal)
    }
}

/// Slippery lake. On a slippery lake the agent moves in the intended
/// direction or either perpendicular one, each with probability 1/3.
#[derive(Debug, Clone)]
pub struct FrozenLake {
    rows: usize,
    cols: usize,
    cells: Vec<LakeCell>,
    start: usize,
    slippery: bool,
    turn_limit: usize,
    position: usize,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl FrozenLake {
    pub fn standard(slippery: bool) -> Self {
        Self::from_rows(&STANDARD_MAP, slippery, 100).expect("standard map is valid")
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S], slippery: bool, turn_limit: usize) -> Result<Self, EnvError> {
        let height = rows.len();
        if height == 0 {
            return Err(EnvError::Layout("empty map".into()));
        }
        let width = rows[0].as_ref().chars().count();
        let mut cells = Vec::with_capacity(width * height);
        for row in rows {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(EnvError::Layout("ragged map rows".into()));
            }
            for c in row.chars() {
                cells.push(LakeCell::from_char(c).ok_or_else(|| EnvError::Layout(format!("unknown lake cell {c:?}")))?);
            }
        }
        let starts: Vec<usize> = (0..cells.len()).filter(|&i| cells[i] == LakeCell::Start).collect();
        let goals = cells.iter().filter(|&&c| c == LakeCell::Goal).count();
        if starts.len() != 1 || goals != 1 {
            return Err(EnvError::Layout("map needs exactly one S and one G".into()));
        }
        Ok(Self {
            rows: height,
            cols: width,
            cells,
            start: starts[0],
            slippery,
            turn_limit,
            position: starts[0],
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn with_turn_limit(mut self, turn_limit: usize) -> Self {
        self.turn_limit = turn_limit;
        self
    }

    /// Parses the plain-text layout, one row per line.
    pub fn parse(text: &str, slippery: bool, turn_limit: usize) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        Self::from_rows(&rows, slippery, turn_limit)
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.cells[r * self.cols + c].to_char());
            }
            out.push('\n');
        }
        out
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn cell(&self, state: usize) -> LakeCell {
        self.cells[state]
    }

    /// Cell reached by moving from `state` in `direction`; walls block.
    pub fn moved(&self, state: usize, direction: usize) -> usize {
        let (r, c) = (state / self.cols, state % self.cols);
        let (r, c) = match direction {
            LEFT => (r, c.saturating_sub(1)),
            DOWN => ((r + 1).min(self.rows - 1), c),
            RIGHT => (r, (c + 1).min(self.cols - 1)),
            UP => (r.saturating_sub(1), c),
            _ => unreachable!(),
        };
        r * self.cols + c
    }

    /// Directions the agent may actually move in, each equally likely.
    pub fn outcome_directions(&self, action: usize) -> Vec<usize> {
        if self.slippery {
            vec![(action + 3) % 4, action, (action + 1) % 4]
        } else {
            vec![action]
        }
    }

    fn reward_of(&self, state: usize) -> f64 {
        if self.cells[state] == LakeCell::Goal {
            1.0
        } else {
            0.0
        }
    }
}

impl Environment for FrozenLake {
    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { count: 4 }
    }

    fn observation_dim(&self) -> usize {
        self.cells.len()
    }

    fn state_count(&self) -> Option<usize> {
        Some(self.cells.len())
    }

    fn turn_limit(&self) -> usize {
        self.turn_limit
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = self.start;
        self.steps = 0;
        self.done = false;
        Observation::tabular(self.position, self.cells.len())
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        self.action_spec().validate(action)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let a = action.index().unwrap_or_default();
        let direction = if self.slippery {
            let dirs = self.outcome_directions(a);
            dirs[self.rng.gen_range(0..dirs.len())]
        } else {
            a
        };
        self.position = self.moved(self.position, direction);
        self.steps += 1;
        let terminal = self.cells[self.position].is_terminal();
        let truncated = !terminal && self.steps >= self.turn_limit;
        self.done = terminal || truncated;
        Ok(StepOutcome {
            reward: self.reward_of(self.position),
            next_observation: Observation::tabular(self.position, self.cells.len()),
            terminal,
            truncated,
        })
    }

    fn tabular_model(&self) -> Option<TabularModel> {
        let n = self.cells.len();
        let mut transitions = Vec::with_capacity(n);
        for s in 0..n {
            let mut per_action = Vec::with_capacity(4);
            for a in 0..4 {
                let dirs = self.outcome_directions(a);
                let p = 1.0 / dirs.len() as f64;
                let mut outs: Vec<Transition> = Vec::new();
                for d in dirs {
                    let next = self.moved(s, d);
                    match outs.iter_mut().find(|t| t.next == next) {
                        Some(t) => t.probability += p,
                        None => outs.push(Transition { probability: p, next, reward: self.reward_of(next) }),
                    }
                }
                per_action.push(outs);
            }
            transitions.push(per_action);
        }
        Some(TabularModel {
            start: self.start,
            terminal: self.cells.iter().map(|c| c.is_terminal()).collect(),
            transitions,
        })
    }
}
