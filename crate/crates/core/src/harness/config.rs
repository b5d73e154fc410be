use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::agents::{AgentConfig, Budget, DecayUnit, EpsilonSchedule};
use crate::env::{CartPole, FrozenLake, GridWorld, MountainCar};
use crate::mdp::{Action, ActionSpec, EnvError, Environment, Observation, StepOutcome};
use crate::nn::Activation;
use crate::oracle::TabularModel;
use crate::shaper::{BetaSchedule, ThresholdMode, ThresholdState};

pub const PRESETS: [&str; 6] =
    ["doorkey6", "multiroom2", "frozenlake", "cartpole_cont", "mountaincar", "transfer_doorkey"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    FrozenLake { slippery: bool, turn_limit: usize },
    DoorKey { size: usize, turn_limit: usize },
    TwoRooms { size: usize, turn_limit: usize },
    CartPole { turn_limit: usize },
    CartPoleContinuing,
    MountainCar { turn_limit: usize },
}

impl EnvSpec {
    pub fn build(&self) -> Result<AnyEnv, HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        Ok(match *self {
            EnvSpec::FrozenLake { slippery, turn_limit } => {
                AnyEnv::Lake(FrozenLake::standard(slippery).with_turn_limit(turn_limit))
            }
            EnvSpec::DoorKey { size, turn_limit } => {
                if !(5..=8).contains(&size) {
                    return bad("door_key size must be in 5..=8");
                }
                AnyEnv::Grid(GridWorld::door_key(size).with_turn_limit(turn_limit))
            }
            EnvSpec::TwoRooms { size, turn_limit } => {
                if size < 5 {
                    return bad("two_rooms size must be at least 5");
                }
                AnyEnv::Grid(GridWorld::two_rooms(size).with_turn_limit(turn_limit))
            }
            EnvSpec::CartPole { turn_limit } => AnyEnv::CartPole(CartPole::episodic().with_turn_limit(turn_limit)),
            EnvSpec::CartPoleContinuing => AnyEnv::CartPole(CartPole::continuing()),
            EnvSpec::MountainCar { turn_limit } => AnyEnv::MountainCar(MountainCar::new().with_turn_limit(turn_limit)),
        })
    }
}

/// Closed set of environments the harness can build.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Lake(FrozenLake),
    Grid(GridWorld),
    CartPole(CartPole),
    MountainCar(MountainCar),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEnv::Lake($e) => $body,
            AnyEnv::Grid($e) => $body,
            AnyEnv::CartPole($e) => $body,
            AnyEnv::MountainCar($e) => $body,
        }
    };
}

impl Environment for AnyEnv {
    fn action_spec(&self) -> ActionSpec {
        delegate!(self, e => e.action_spec())
    }
    fn observation_dim(&self) -> usize {
        delegate!(self, e => e.observation_dim())
    }
    fn state_count(&self) -> Option<usize> {
        delegate!(self, e => e.state_count())
    }
    fn turn_limit(&self) -> usize {
        delegate!(self, e => e.turn_limit())
    }
    fn is_continuing(&self) -> bool {
        delegate!(self, e => e.is_continuing())
    }
    fn reset(&mut self, seed: u64) -> Observation {
        delegate!(self, e => e.reset(seed))
    }
    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        delegate!(self, e => e.step(action))
    }
    fn tabular_model(&self) -> Option<TabularModel> {
        delegate!(self, e => e.tabular_model())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    TabularQ,
    Dqn,
    A2c,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Baseline,
    Sibre,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Sibre => "sibre",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperSpec {
    pub rho0: f64,
    pub update_period: usize,
    pub beta: BetaSchedule,
    pub mode: ThresholdMode,
}

impl ShaperSpec {
    pub fn threshold(&self) -> Result<ThresholdState, HarnessError> {
        ThresholdState::new(self.rho0, self.update_period, self.beta, self.mode)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "snake_case")]
pub enum Sweep {
    None,
    BetaValues { values: Vec<BetaSchedule> },
    LearningRates { values: Vec<f64> },
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::None => 0,
            Sweep::BetaValues { values } => values.len(),
            Sweep::LearningRates { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSpec {
    pub target: EnvSpec,
    pub target_budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub output: String,
    pub environment: EnvSpec,
    pub agent_kind: AgentKind,
    pub agent: AgentConfig,
    pub shaper: ShaperSpec,
    pub sweep: Sweep,
    pub transfer: Option<TransferSpec>,
    /// Budgets used when running at the published scale.
    pub paper_budget: Option<Budget>,
    pub paper_target_budget: Option<Budget>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// SHA-256 of the serialized config.
    pub fn hash(&self) -> Result<String, HarnessError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.arms.is_empty() || self.arms.iter().collect::<BTreeSet<_>>().len() != self.arms.len() {
            return bad("arms must be nonempty and distinct".into());
        }
        self.agent.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.shaper.threshold()?;
        let env = self.environment.build()?;
        match self.agent_kind {
            AgentKind::TabularQ if env.state_count().is_none() => {
                return bad("tabular_q needs a tabular environment".into());
            }
            AgentKind::Dqn if env.action_spec().discrete_count().is_none() => {
                return bad("dqn needs discrete actions".into());
            }
            _ => {}
        }
        let continuing_shaper = matches!(self.shaper.mode, ThresholdMode::Continuing { .. });
        if continuing_shaper != env.is_continuing() {
            return bad("shaper mode must match whether the environment is continuing".into());
        }
        if let Some(t) = &self.transfer {
            if self.agent_kind != AgentKind::A2c {
                return bad("transfer needs the a2c agent".into());
            }
            let target = t.target.build()?;
            if target.observation_dim() != env.observation_dim() || target.action_spec() != env.action_spec() {
                return bad("transfer target must share the observation encoding and action set".into());
            }
        }
        Ok(())
    }

    pub fn with_paper_scale(mut self) -> Self {
        if let Some(b) = self.paper_budget {
            self.agent.budget = b;
        }
        if let (Some(t), Some(b)) = (&mut self.transfer, self.paper_target_budget) {
            t.target_budget = b;
        }
        self
    }
}

fn staircase() -> ShaperSpec {
    ShaperSpec { rho0: 0.0, update_period: 1, beta: BetaSchedule::default_staircase(), mode: ThresholdMode::Episodic }
}

fn gridworld_agent(frames: u64) -> AgentConfig {
    AgentConfig {
        learning_rate: 7e-4,
        gamma: 0.99,
        entropy_coef: 0.01,
        value_coef: 0.5,
        rollout_len: 5,
        num_envs: 16,
        hidden: vec![64, 64],
        activation: Activation::Tanh,
        max_grad_norm: Some(0.5),
        budget: Budget::Frames(frames),
        ..AgentConfig::default()
    }
}

/// Expands a named preset.
pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let both = vec![Arm::Baseline, Arm::Sibre];
    let base = |name: &str, seeds: u64, environment, agent_kind, agent, shaper| ExperimentConfig {
        name: name.to_string(),
        seeds: (0..seeds).collect(),
        arms: both.clone(),
        output: format!("runs/{name}"),
        environment,
        agent_kind,
        agent,
        shaper,
        sweep: Sweep::None,
        transfer: None,
        paper_budget: None,
        paper_target_budget: None,
    };
    let config = match name {
        "frozenlake" => base(
            name,
            10,
            EnvSpec::FrozenLake { slippery: true, turn_limit: 100 },
            AgentKind::TabularQ,
            AgentConfig {
                learning_rate: 0.1,
                gamma: 0.99,
                epsilon: EpsilonSchedule { start: 1.0, decay: 0.9, every: 100, floor: 0.01, unit: DecayUnit::Steps },
                budget: Budget::Episodes(10_000),
                ..AgentConfig::default()
            },
            staircase(),
        ),
        "doorkey6" => ExperimentConfig {
            paper_budget: Some(Budget::Frames(1_800_000)),
            ..base(
                name,
                5,
                EnvSpec::DoorKey { size: 6, turn_limit: 1000 },
                AgentKind::A2c,
                gridworld_agent(200_000),
                staircase(),
            )
        },
        "multiroom2" => ExperimentConfig {
            paper_budget: Some(Budget::Frames(1_800_000)),
            ..base(
                name,
                5,
                EnvSpec::TwoRooms { size: 7, turn_limit: 1000 },
                AgentKind::A2c,
                gridworld_agent(200_000),
                staircase(),
            )
        },
        "cartpole_cont" => ExperimentConfig {
            paper_budget: Some(Budget::Frames(1_000_000)),
            ..base(
                name,
                5,
                EnvSpec::CartPoleContinuing,
                AgentKind::Dqn,
                AgentConfig {
                    learning_rate: 0.001,
                    gamma: 0.99,
                    epsilon: EpsilonSchedule {
                        start: 1.0,
                        decay: 0.9999,
                        every: 1,
                        floor: 0.01,
                        unit: DecayUnit::Steps,
                    },
                    batch_size: 32,
                    target_update: 1000,
                    replay_capacity: 100_000,
                    learning_starts: 1000,
                    hidden: vec![32, 32],
                    activation: Activation::Relu,
                    max_grad_norm: None,
                    window: 500,
                    budget: Budget::Frames(100_000),
                    ..AgentConfig::default()
                },
                ShaperSpec {
                    rho0: 0.0,
                    update_period: 500,
                    beta: BetaSchedule::default_staircase(),
                    mode: ThresholdMode::Continuing { gamma: 0.99 },
                },
            )
        },
        "mountaincar" => base(
            name,
            10,
            EnvSpec::MountainCar { turn_limit: 999 },
            AgentKind::A2c,
            AgentConfig {
                learning_rate: 0.001,
                gamma: 0.95,
                entropy_coef: 0.1,
                num_envs: 1,
                hidden: vec![64, 64],
                activation: Activation::Tanh,
                max_grad_norm: Some(0.5),
                budget: Budget::Episodes(50),
                ..AgentConfig::default()
            },
            ShaperSpec { beta: BetaSchedule::constant(0.1), ..staircase() },
        ),
        "transfer_doorkey" => ExperimentConfig {
            transfer: Some(TransferSpec {
                target: EnvSpec::DoorKey { size: 8, turn_limit: 1000 },
                target_budget: Budget::Frames(300_000),
            }),
            paper_budget: Some(Budget::Frames(800_000)),
            paper_target_budget: Some(Budget::Frames(2_400_000)),
            ..base(
                name,
                5,
                EnvSpec::DoorKey { size: 5, turn_limit: 1000 },
                AgentKind::A2c,
                gridworld_agent(100_000),
                staircase(),
            )
        },
        other => return Err(HarnessError::UnknownPreset(other.to_string())),
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_roundtrip_through_toml() {
        for name in PRESETS {
            let config = preset(name).unwrap();
            let text = config.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, config, "{name}");
            assert_eq!(back.to_toml().unwrap(), text);
            assert_eq!(back.hash().unwrap(), config.hash().unwrap());
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(matches!(preset("pong"), Err(HarnessError::UnknownPreset(_))));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = preset("frozenlake").unwrap();
        c.seeds = vec![1, 1];
        assert!(c.validate().is_err());
        c.seeds = vec![];
        assert!(c.validate().is_err());
        let mut c = preset("cartpole_cont").unwrap();
        c.agent_kind = AgentKind::TabularQ;
        assert!(c.validate().is_err());
        let mut c = preset("frozenlake").unwrap();
        c.shaper.mode = ThresholdMode::Continuing { gamma: 0.9 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_changes_with_config() {
        let a = preset("frozenlake").unwrap();
        let mut b = a.clone();
        b.seeds.push(99);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn paper_scale_swaps_budgets() {
        let c = preset("transfer_doorkey").unwrap().with_paper_scale();
        assert_eq!(c.agent.budget, Budget::Frames(800_000));
        assert_eq!(c.transfer.unwrap().target_budget, Budget::Frames(2_400_000));
    }
}
