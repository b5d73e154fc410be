//! Training loops. Every loop takes an optional [`ThresholdState`]; without
//! one the rewards reach the learner untouched, so the baseline and shaped
//! arms share all other code.

mod a2c;
mod dqn;
mod tabular;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use a2c::{
    a2c_gradients, a2c_loss, resume_a2c, train_a2c, transfer_checkpoint, ActorCritic, Checkpoint, PolicyKind,
    RolloutSample,
};
pub use dqn::{dqn_gradients, td_targets, train_dqn, Experience, ReplayBuffer};
pub use tabular::{epsilon_greedy, train_tabular_q, QTable};

use crate::mdp::{EnvError, StepOutcome};
use crate::nn::{Activation, DenseNet, NetError, OptimizerKind};
use crate::shaper::{Shaper, ThresholdState};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("incompatible checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayUnit {
    #[default]
    Steps,
    Episodes,
}

/// Multiplicative decay applied once every `every` steps or episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub every: u64,
    pub floor: f64,
    #[serde(default)]
    pub unit: DecayUnit,
}

impl EpsilonSchedule {
    pub fn value(&self, steps: u64, episodes: u64) -> f64 {
        let count = match self.unit {
            DecayUnit::Steps => steps,
            DecayUnit::Episodes => episodes,
        };
        let k = (count / self.every.max(1)) as f64;
        (self.start * self.decay.powf(k)).max(self.floor)
    }

    pub fn fixed(value: f64) -> Self {
        Self { start: value, decay: 1.0, every: 1, floor: value, unit: DecayUnit::Steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Episodes(u64),
    Frames(u64),
}

impl Budget {
    fn fraction(&self, episodes: u64, frames: u64) -> f64 {
        match *self {
            Budget::Episodes(n) => episodes as f64 / n.max(1) as f64,
            Budget::Frames(n) => frames as f64 / n.max(1) as f64,
        }
    }

    fn exhausted(&self, episodes: u64, frames: u64) -> bool {
        match *self {
            Budget::Episodes(n) => episodes >= n,
            Budget::Frames(n) => frames >= n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub batch_size: usize,
    pub target_update: u64,
    pub replay_capacity: usize,
    pub learning_starts: u64,
    pub rollout_len: usize,
    pub num_envs: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
    /// Reporting window in steps for continuing tasks.
    pub window: u64,
    pub budget: Budget,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            gamma: 0.99,
            epsilon: EpsilonSchedule { start: 1.0, decay: 0.9, every: 100, floor: 0.01, unit: DecayUnit::Steps },
            entropy_coef: 0.01,
            value_coef: 0.5,
            batch_size: 32,
            target_update: 1000,
            replay_capacity: 100_000,
            learning_starts: 1000,
            rollout_len: 5,
            num_envs: 1,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            optimizer: OptimizerKind::adam(),
            max_grad_norm: Some(0.5),
            window: 500,
            budget: Budget::Episodes(10_000),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.floor) || !(0.0..=1.0).contains(&e.decay) {
            return bad("epsilon schedule values must lie in [0, 1]");
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("loss coefficients must be nonnegative");
        }
        if self.batch_size == 0 || self.rollout_len == 0 || self.num_envs == 0 || self.window == 0 {
            return bad("batch size, rollout length, env count and window must be positive");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay capacity smaller than a batch");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layers must be nonempty");
        }
        if matches!(self.max_grad_norm, Some(n) if n <= 0.0) {
            return bad("gradient clip norm must be positive");
        }
        Ok(())
    }
}

/// One point of a learning curve: an episode, or a reporting window on a
/// continuing task. `ret` is always on the original reward scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub index: u64,
    pub ret: f64,
    /// Threshold the episode was shaped against; `None` for the baseline.
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    /// Cumulative environment steps when the point closed.
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    QTable(QTable),
    QNetwork(DenseNet),
    ActorCritic(ActorCritic),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub threshold: Option<ThresholdState>,
    pub frames: u64,
    pub model: TrainedModel,
}

pub const CURVE_COLUMNS: [&str; 7] = ["seed", "episode_or_window", "return", "rho", "beta", "epsilon", "steps"];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RunResult {
    pub fn returns(&self) -> Vec<f64> {
        self.curve.iter().map(|p| p.ret).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AgentError> {
        let err = |e: csv::Error| AgentError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CURVE_COLUMNS).map_err(err)?;
        for p in &self.curve {
            w.write_record([
                self.seed.to_string(),
                p.index.to_string(),
                p.ret.to_string(),
                opt(p.rho),
                opt(p.beta),
                opt(p.epsilon),
                p.steps.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| AgentError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Routes environment rewards to the learner, shaping them when a threshold
/// is attached.
pub(crate) struct RewardChannel {
    shaper: Option<Shaper>,
}

pub(crate) struct Routed {
    pub reward: f64,
    pub rho_used: Option<f64>,
}

impl RewardChannel {
    pub fn new(threshold: Option<ThresholdState>, lanes: usize) -> Self {
        Self { shaper: threshold.map(|t| Shaper::with_lanes(t, lanes)) }
    }

    pub fn route(&mut self, lane: usize, outcome: &StepOutcome, fraction: f64) -> Routed {
        match &mut self.shaper {
            None => Routed { reward: outcome.reward, rho_used: None },
            Some(s) => {
                let step = s.shape_lane(lane, outcome, fraction);
                Routed { reward: step.reward.value, rho_used: Some(step.rho_used) }
            }
        }
    }

    pub fn beta(&self) -> Option<f64> {
        self.shaper.as_ref().map(|s| s.threshold().beta())
    }

    pub fn into_threshold(self) -> Option<ThresholdState> {
        self.shaper.map(Shaper::into_threshold)
    }
}

/// Accumulates original rewards into learning-curve points: one per episode,
/// or one per `window` steps on a continuing task.
pub(crate) struct CurveRecorder {
    continuing: bool,
    window: u64,
    lane_returns: Vec<f64>,
    window_return: f64,
    window_steps: u64,
    window_rho: Option<f64>,
    pub points: Vec<CurvePoint>,
}

impl CurveRecorder {
    pub fn new(continuing: bool, window: u64, lanes: usize) -> Self {
        Self {
            continuing,
            window,
            lane_returns: vec![0.0; lanes],
            window_return: 0.0,
            window_steps: 0,
            window_rho: None,
            points: Vec::new(),
        }
    }

    /// Records one step; returns true when a point was closed.
    #[allow(clippy::too_many_arguments)]
    pub fn record(
        &mut self,
        lane: usize,
        outcome: &StepOutcome,
        rho_used: Option<f64>,
        channel: &RewardChannel,
        epsilon: Option<f64>,
        frames: u64,
    ) -> bool {
        if self.continuing {
            self.window_return += outcome.reward;
            self.window_steps += 1;
            if self.window_rho.is_none() {
                self.window_rho = rho_used;
            }
            if self.window_steps < self.window {
                return false;
            }
            self.push(self.window_return, self.window_rho, channel, epsilon, frames);
            self.window_return = 0.0;
            self.window_steps = 0;
            self.window_rho = None;
            true
        } else {
            self.lane_returns[lane] += outcome.reward;
            if !outcome.ends_episode() {
                return false;
            }
            let ret = std::mem::take(&mut self.lane_returns[lane]);
            self.push(ret, rho_used, channel, epsilon, frames);
            true
        }
    }

    fn push(&mut self, ret: f64, rho: Option<f64>, channel: &RewardChannel, epsilon: Option<f64>, steps: u64) {
        let index = self.points.len() as u64;
        self.points.push(CurvePoint { index, ret, rho, beta: channel.beta(), epsilon, steps });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_decays_per_block() {
        let e = EpsilonSchedule { start: 1.0, decay: 0.9, every: 100, floor: 0.01, unit: DecayUnit::Steps };
        assert_eq!(e.value(0, 0), 1.0);
        assert_eq!(e.value(99, 5), 1.0);
        assert!((e.value(100, 0) - 0.9).abs() < 1e-15);
        assert!((e.value(250, 0) - 0.81).abs() < 1e-15);
        assert_eq!(e.value(1_000_000, 0), 0.01);
        let e = EpsilonSchedule { unit: DecayUnit::Episodes, ..e };
        assert_eq!(e.value(1_000, 99), 1.0);
        assert!((e.value(0, 100) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = AgentConfig { gamma: 1.5, ..AgentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = AgentConfig { replay_capacity: 4, ..AgentConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn curve_csv_has_declared_columns() {
        let run = RunResult {
            seed: 3,
            curve: vec![
                CurvePoint { index: 0, ret: 1.0, rho: Some(0.0), beta: Some(0.001), epsilon: Some(1.0), steps: 7 },
                CurvePoint { index: 1, ret: 0.0, rho: None, beta: None, epsilon: None, steps: 9 },
            ],
            threshold: None,
            frames: 9,
            model: TrainedModel::QTable(QTable::new(1, 1)),
        };
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "seed,episode_or_window,return,rho,beta,epsilon,steps\n3,0,1,0,0.001,1,7\n3,1,0,,,,9\n");
    }
}
