//! Cart-pole and continuous mountain-car with the usual benchmark constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Action, ActionSpec, EnvError, Environment, Observation, StepOutcome};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 15.0 * std::f64::consts::PI / 180.0;
pub const POSITION_LIMIT: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub const ZERO: Self = Self { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0 };

    pub fn failed(&self) -> bool {
        self.theta.abs() > ANGLE_LIMIT || self.x.abs() > POSITION_LIMIT
    }

    fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }

    /// One explicit Euler step under a horizontal force on the cart.
    pub fn advance(self, force: f64) -> Self {
        let total_mass = CART_MASS + POLE_MASS;
        let pole_mass_length = POLE_MASS * HALF_LENGTH;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_mass_length * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        Self {
            x: self.x + TAU * self.x_dot,
            x_dot: self.x_dot + TAU * x_acc,
            theta: self.theta + TAU * self.theta_dot,
            theta_dot: self.theta_dot + TAU * theta_acc,
        }
    }
}

/// Balance a pole on a cart with two actions: 0 pushes left, 1 pushes right.
///
/// The episodic variant pays +1 per step and terminates on failure. The
/// continuing variant pays 0 per step and -1 on failure, then silently
/// re-initializes the cart; it never terminates.
#[derive(Debug, Clone)]
pub struct CartPole {
    continuing: bool,
    turn_limit: usize,
    state: CartPoleState,
    steps: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl CartPole {
    pub fn episodic() -> Self {
        Self::new(false, 500)
    }

    pub fn continuing() -> Self {
        Self::new(true, usize::MAX)
    }

    fn new(continuing: bool, turn_limit: usize) -> Self {
        Self {
            continuing,
            turn_limit,
            state: CartPoleState::ZERO,
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn with_turn_limit(mut self, turn_limit: usize) -> Self {
        self.turn_limit = turn_limit;
        self
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
    }

    fn sample_initial(&mut self) -> CartPoleState {
        let mut u = || self.rng.gen_range(-0.05..0.05);
        CartPoleState { x: u(), x_dot: u(), theta: u(), theta_dot: u() }
    }
}

impl Environment for CartPole {
    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Discrete { count: 2 }
    }

    fn observation_dim(&self) -> usize {
        4
    }

    fn turn_limit(&self) -> usize {
        self.turn_limit
    }

    fn is_continuing(&self) -> bool {
        self.continuing
    }

    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = self.sample_initial();
        self.steps = 0;
        self.done = false;
        Observation::vector(self.state.to_vec())
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        self.action_spec().validate(action)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let force = if action.index() == Some(1) { FORCE_MAG } else { -FORCE_MAG };
        self.state = self.state.advance(force);
        self.steps += 1;
        let failed = self.state.failed();
        let (reward, terminal) = if self.continuing {
            if failed {
                self.state = self.sample_initial();
            }
            (if failed { -1.0 } else { 0.0 }, false)
        } else {
            (1.0, failed)
        };
        let truncated = !terminal && self.steps >= self.turn_limit;
        self.done = terminal || truncated;
        Ok(StepOutcome { reward, next_observation: Observation::vector(self.state.to_vec()), terminal, truncated })
    }
}

pub const MC_MIN_POSITION: f64 = -1.2;
pub const MC_MAX_POSITION: f64 = 0.6;
pub const MC_MAX_SPEED: f64 = 0.07;
pub const MC_GOAL_POSITION: f64 = 0.45;
pub const MC_POWER: f64 = 0.0015;
pub const MC_GOAL_REWARD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn advance(self, force: f64) -> Self {
        let mut velocity = self.velocity + force * MC_POWER - 0.0025 * (3.0 * self.position).cos();
        velocity = velocity.clamp(-MC_MAX_SPEED, MC_MAX_SPEED);
        let position = (self.position + velocity).clamp(MC_MIN_POSITION, MC_MAX_POSITION);
        if position == MC_MIN_POSITION && velocity < 0.0 {
            velocity = 0.0;
        }
        Self { position, velocity }
    }

    pub fn at_goal(&self) -> bool {
        self.position >= MC_GOAL_POSITION
    }
}

/// Continuous mountain car: reward `-0.1 * force^2` per step, plus 100 on the
/// step that reaches the goal. Observations are scaled to roughly [-1, 1].
#[derive(Debug, Clone)]
pub struct MountainCar {
    turn_limit: usize,
    state: MountainCarState,
    steps: usize,
    done: bool,
}

impl MountainCar {
    pub fn new() -> Self {
        Self { turn_limit: 999, state: MountainCarState { position: -0.5, velocity: 0.0 }, steps: 0, done: false }
    }

    pub fn with_turn_limit(mut self, turn_limit: usize) -> Self {
        self.turn_limit = turn_limit;
        self
    }

    pub fn state(&self) -> MountainCarState {
        self.state
    }

    pub fn set_state(&mut self, state: MountainCarState) {
        self.state = state;
    }

    fn observe(&self) -> Observation {
        let mid = 0.5 * (MC_MIN_POSITION + MC_MAX_POSITION);
        let half = 0.5 * (MC_MAX_POSITION - MC_MIN_POSITION);
        Observation::vector(vec![(self.state.position - mid) / half, self.state.velocity / MC_MAX_SPEED])
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn action_spec(&self) -> ActionSpec {
        ActionSpec::Continuous { low: vec![-1.0], high: vec![1.0] }
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn turn_limit(&self) -> usize {
        self.turn_limit
    }

    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = MountainCarState { position: rng.gen_range(-0.6..-0.4), velocity: 0.0 };
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        self.action_spec().validate(action)?;
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let force = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => unreachable!("validated"),
        };
        self.state = self.state.advance(force);
        self.steps += 1;
        let terminal = self.state.at_goal();
        let mut reward = -0.1 * force * force;
        if terminal {
            reward += MC_GOAL_REWARD;
        }
        let truncated = !terminal && self.steps >= self.turn_limit;
        self.done = terminal || truncated;
        Ok(StepOutcome { reward, next_observation: self.observe(), terminal, truncated })
    }
}
