//! Self-improvement terminal-reward shaping.
//!
//! Every step reward passes through unchanged except the one that ends an
//! episode, which is replaced by `G - rho`: the episode's return on the
//! original reward scale minus the current threshold. The threshold is an
//! exponential average of past returns,
//!
//! ```text
//! rho <- rho + beta * (mean(G over the last K episodes) - rho)
//! ```
//!
//! so the agent is paid for beating its own recent performance and penalised
//! for falling short of it. In continuing tasks the "episode" is a window of
//! `K` steps and `G` is the discounted return over that window.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{discounted_sum, StepOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShaperError {
    #[error("beta must lie in (0, 1), got {0}")]
    BetaOutOfRange(f64),
    #[error("staircase must be nondecreasing with at least one stage")]
    BadStaircase,
    #[error("update period must be at least 1")]
    ZeroPeriod,
    #[error("continuing mode needs gamma in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("initial threshold must be finite")]
    NonFiniteRho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant {
        value: f64,
    },
    /// Climbs from `start` to `end` in `stages` equal steps, each spanning an
    /// equal fraction of the training budget.
    LinearStaircase {
        start: f64,
        end: f64,
        stages: u32,
    },
}

impl BetaSchedule {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    /// Schedule used for the gridworld, FrozenLake and CartPole runs.
    pub fn default_staircase() -> Self {
        Self::LinearStaircase { start: 0.001, end: 0.1, stages: 10 }
    }

    pub fn validate(&self) -> Result<(), ShaperError> {
        let in_range = |b: f64| b > 0.0 && b < 1.0;
        match *self {
            Self::Constant { value } if !in_range(value) => Err(ShaperError::BetaOutOfRange(value)),
            Self::LinearStaircase { start, end, stages } => {
                for b in [start, end] {
                    if !in_range(b) {
                        return Err(ShaperError::BetaOutOfRange(b));
                    }
                }
                if stages == 0 || end < start {
                    return Err(ShaperError::BadStaircase);
                }
                Ok(())
            }
            Self::Constant { .. } => Ok(()),
        }
    }
}

/// Step size at the given fraction of the training budget.
pub fn current_beta(schedule: &BetaSchedule, training_fraction: f64) -> f64 {
    match *schedule {
        BetaSchedule::Constant { value } => value,
        BetaSchedule::LinearStaircase { start, end, stages } => {
            let fraction = training_fraction.clamp(0.0, 1.0);
            let stage = (fraction * stages as f64).floor();
            let denom = (stages.max(2) - 1) as f64;
            (start + (end - start) * stage / denom).min(end)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `update_period` counts episodes; returns are undiscounted.
    Episodic,
    /// `update_period` counts steps; window returns are discounted by `gamma`.
    Continuing { gamma: f64 },
}

/// Everything the shaper remembers between episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdState {
    rho: f64,
    update_period: usize,
    pending_returns: Vec<f64>,
    episodes_seen: u64,
    updates: u64,
    beta: f64,
    schedule: BetaSchedule,
    mode: ThresholdMode,
    frozen: bool,
}

impl ThresholdState {
    pub fn new(
        rho0: f64,
        update_period: usize,
        schedule: BetaSchedule,
        mode: ThresholdMode,
    ) -> Result<Self, ShaperError> {
        schedule.validate()?;
        if update_period == 0 {
            return Err(ShaperError::ZeroPeriod);
        }
        if !rho0.is_finite() {
            return Err(ShaperError::NonFiniteRho);
        }
        if let ThresholdMode::Continuing { gamma } = mode {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(ShaperError::BadGamma(gamma));
            }
        }
        Ok(Self {
            rho: rho0,
            update_period,
            pending_returns: Vec::with_capacity(update_period),
            episodes_seen: 0,
            updates: 0,
            beta: current_beta(&schedule, 0.0),
            schedule,
            mode,
            frozen: false,
        })
    }

    /// Episodic threshold with period 1 starting at zero.
    pub fn episodic(schedule: BetaSchedule) -> Result<Self, ShaperError> {
        Self::new(0.0, 1, schedule, ThresholdMode::Episodic)
    }

    /// A threshold that never moves; shaped terminal rewards become `G - rho`.
    pub fn frozen(rho: f64) -> Self {
        Self {
            rho,
            update_period: 1,
            pending_returns: Vec::new(),
            episodes_seen: 0,
            updates: 0,
            beta: 0.0,
            schedule: BetaSchedule::Constant { value: 0.0 },
            mode: ThresholdMode::Episodic,
            frozen: true,
        }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Step size used by the most recent update (or the initial one).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn update_period(&self) -> usize {
        self.update_period
    }

    pub fn pending_returns(&self) -> &[f64] {
        &self.pending_returns
    }

    pub fn episodes_seen(&self) -> u64 {
        self.episodes_seen
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn schedule(&self) -> &BetaSchedule {
        &self.schedule
    }

    pub fn mode(&self) -> ThresholdMode {
        self.mode
    }

    /// Returns needed per update: `update_period` episodes in episodic mode,
    /// a single window return in continuing mode.
    fn returns_per_update(&self) -> usize {
        match self.mode {
            ThresholdMode::Episodic => self.update_period,
            ThresholdMode::Continuing { .. } => 1,
        }
    }

    /// Appends one return and, once enough have accumulated, moves the
    /// threshold toward their mean. Returns whether an update happened.
    pub fn record_return(&mut self, ret: f64, training_fraction: f64) -> bool {
        self.episodes_seen += 1;
        if self.frozen {
            return false;
        }
        self.pending_returns.push(ret);
        if self.pending_returns.len() < self.returns_per_update() {
            return false;
        }
        let mean = self.pending_returns.iter().sum::<f64>() / self.pending_returns.len() as f64;
        self.pending_returns.clear();
        self.beta = current_beta(&self.schedule, training_fraction);
        self.rho += self.beta * (mean - self.rho);
        self.updates += 1;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedReward {
    pub value: f64,
    pub was_terminal_replacement: bool,
}

/// Reward transform for one step. `return_so_far` must already include this
/// step's reward, so on the final step it is the episode return.
pub fn shape_step(state: &ThresholdState, outcome: &StepOutcome, return_so_far: f64) -> ShapedReward {
    if outcome.ends_episode() {
        ShapedReward { value: return_so_far - state.rho, was_terminal_replacement: true }
    } else {
        ShapedReward { value: outcome.reward, was_terminal_replacement: false }
    }
}

/// Discounted return over one window of a continuing task.
pub fn continuing_window_return(rewards: &[f64], gamma: f64) -> f64 {
    discounted_sum(rewards, gamma)
}

/// Online shaper an agent calls once per environment step.
#[derive(Debug, Clone)]
pub struct Shaper {
    threshold: ThresholdState,
    episode_returns: Vec<f64>,
    windows: Vec<Vec<f64>>,
}

/// What the shaper did on the step it was fed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedStep {
    pub reward: ShapedReward,
    /// Threshold in effect when the step was shaped.
    pub rho_used: f64,
    /// Return that was recorded on this step, if it closed an episode or window.
    pub recorded_return: Option<f64>,
}

impl Shaper {
    pub fn new(threshold: ThresholdState) -> Self {
        Self::with_lanes(threshold, 1)
    }

    /// One shared threshold fed by `lanes` independent environment copies,
    /// each with its own running return.
    pub fn with_lanes(threshold: ThresholdState, lanes: usize) -> Self {
        assert!(lanes > 0, "a shaper needs at least one lane");
        let cap = match threshold.mode {
            ThresholdMode::Episodic => 0,
            ThresholdMode::Continuing { .. } => threshold.update_period,
        };
        Self { threshold, episode_returns: vec![0.0; lanes], windows: vec![Vec::with_capacity(cap); lanes] }
    }

    pub fn lanes(&self) -> usize {
        self.episode_returns.len()
    }

    pub fn threshold(&self) -> &ThresholdState {
        &self.threshold
    }

    pub fn into_threshold(self) -> ThresholdState {
        self.threshold
    }

    pub fn shape(&mut self, outcome: &StepOutcome, training_fraction: f64) -> ShapedStep {
        self.shape_lane(0, outcome, training_fraction)
    }

    /// Shapes `outcome` from environment copy `lane`. In episodic mode the
    /// final step of an episode gets `G - rho`; in continuing mode the last
    /// step of every `K`-step window gets `G_window - rho`. The threshold is
    /// updated afterwards.
    pub fn shape_lane(&mut self, lane: usize, outcome: &StepOutcome, training_fraction: f64) -> ShapedStep {
        let rho_used = self.threshold.rho;
        match self.threshold.mode {
            ThresholdMode::Episodic => {
                self.episode_returns[lane] += outcome.reward;
                let reward = shape_step(&self.threshold, outcome, self.episode_returns[lane]);
                let mut recorded_return = None;
                if outcome.ends_episode() {
                    let g = std::mem::take(&mut self.episode_returns[lane]);
                    self.threshold.record_return(g, training_fraction);
                    recorded_return = Some(g);
                }
                ShapedStep { reward, rho_used, recorded_return }
            }
            ThresholdMode::Continuing { gamma } => {
                let window = &mut self.windows[lane];
                window.push(outcome.reward);
                if window.len() < self.threshold.update_period {
                    return ShapedStep {
                        reward: ShapedReward { value: outcome.reward, was_terminal_replacement: false },
                        rho_used,
                        recorded_return: None,
                    };
                }
                let g = continuing_window_return(window, gamma);
                window.clear();
                let reward = ShapedReward { value: g - rho_used, was_terminal_replacement: true };
                self.threshold.record_return(g, training_fraction);
                ShapedStep { reward, rho_used, recorded_return: Some(g) }
            }
        }
    }
}
