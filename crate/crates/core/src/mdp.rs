//! Environment contract, episode execution and returns.

use thiserror::Error;

use crate::oracle::TabularModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("environment stepped after the episode ended; call reset first")]
    EpisodeOver,
    #[error("layout error: {0}")]
    Layout(String),
}

/// What the agent sees. `discrete_index` is present exactly for tabular
/// environments.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub encoding: Vec<f64>,
    pub discrete_index: Option<usize>,
}

impl Observation {
    pub fn vector(encoding: Vec<f64>) -> Self {
        Self { encoding, discrete_index: None }
    }

    /// One-hot observation of a tabular state.
    pub fn tabular(index: usize, state_count: usize) -> Self {
        let mut encoding = vec![0.0; state_count];
        encoding[index] = 1.0;
        Self { encoding, discrete_index: Some(index) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpec {
    Discrete { count: usize },
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionSpec {
    pub fn discrete_count(&self) -> Option<usize> {
        match self {
            ActionSpec::Discrete { count } => Some(*count),
            ActionSpec::Continuous { .. } => None,
        }
    }

    pub fn validate(&self, action: &Action) -> Result<(), EnvError> {
        match (self, action) {
            (ActionSpec::Discrete { count }, Action::Discrete(a)) => {
                if a < count {
                    Ok(())
                } else {
                    Err(EnvError::InvalidAction(format!("index {a} out of range 0..{count}")))
                }
            }
            (ActionSpec::Continuous { low, high }, Action::Continuous(v)) => {
                if v.len() != low.len() {
                    return Err(EnvError::InvalidAction(format!("expected {} components, got {}", low.len(), v.len())));
                }
                for (i, x) in v.iter().enumerate() {
                    if !x.is_finite() || *x < low[i] || *x > high[i] {
                        return Err(EnvError::InvalidAction(format!(
                            "component {i} = {x} outside [{}, {}]",
                            low[i], high[i]
                        )));
                    }
                }
                Ok(())
            }
            _ => Err(EnvError::InvalidAction("action kind does not match the action space".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

/// Result of one transition. `terminal` and `truncated` are never both set.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_observation: Observation,
    pub terminal: bool,
    pub truncated: bool,
}

impl StepOutcome {
    /// True when this step closes the episode, either way.
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// A reset/step state machine. Implementations own their random state, which
/// is re-seeded on every `reset`.
pub trait Environment: Send {
    fn action_spec(&self) -> ActionSpec;

    fn observation_dim(&self) -> usize;

    /// Number of tabular states, when the environment is tabular.
    fn state_count(&self) -> Option<usize> {
        None
    }

    /// Steps after which an episode is truncated.
    fn turn_limit(&self) -> usize;

    /// Continuing environments never emit `terminal`.
    fn is_continuing(&self) -> bool {
        false
    }

    fn reset(&mut self, seed: u64) -> Observation;

    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError>;

    /// Explicit transition model, for environments small enough to have one.
    fn tabular_model(&self) -> Option<TabularModel> {
        None
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn action_spec(&self) -> ActionSpec {
        (**self).action_spec()
    }
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn state_count(&self) -> Option<usize> {
        (**self).state_count()
    }
    fn turn_limit(&self) -> usize {
        (**self).turn_limit()
    }
    fn is_continuing(&self) -> bool {
        (**self).is_continuing()
    }
    fn reset(&mut self, seed: u64) -> Observation {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
        (**self).step(action)
    }
    fn tabular_model(&self) -> Option<TabularModel> {
        (**self).tabular_model()
    }
}

pub trait Policy {
    fn act(&mut self, observation: &Observation) -> Action;
}

impl<F: FnMut(&Observation) -> Action> Policy for F {
    fn act(&mut self, observation: &Observation) -> Action {
        self(observation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub seed: u64,
    /// Set when the episode hit the step limit without reaching a terminal state.
    pub truncated: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }
}

/// Rolls out one episode, querying `policy` once per step. The episode ends at
/// a terminal state, at the environment's turn limit, or after `max_steps`,
/// whichever comes first.
pub fn run_episode<E, P>(env: &mut E, policy: &mut P, max_steps: usize, seed: u64) -> Result<EpisodeTrace, EnvError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let mut observation = env.reset(seed);
    let mut steps = Vec::new();
    let mut truncated = false;
    loop {
        let action = policy.act(&observation);
        let outcome = env.step(&action)?;
        steps.push(TraceStep {
            observation: std::mem::replace(&mut observation, outcome.next_observation.clone()),
            action,
            reward: outcome.reward,
            terminal: outcome.terminal,
        });
        if outcome.terminal {
            break;
        }
        if outcome.truncated || steps.len() >= max_steps {
            truncated = true;
            break;
        }
    }
    Ok(EpisodeTrace { steps, seed, truncated })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnValue {
    pub undiscounted: f64,
    pub discounted: f64,
    pub gamma: f64,
}

/// `sum_k gamma^k r_k` with `k` starting at 0.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

pub fn compute_return(trace: &EpisodeTrace, gamma: f64) -> ReturnValue {
    compute_return_of(&trace.rewards(), gamma)
}

pub fn compute_return_of(rewards: &[f64], gamma: f64) -> ReturnValue {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
    ReturnValue { undiscounted: rewards.iter().sum(), discounted: discounted_sum(rewards, gamma), gamma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CartPole, FrozenLake};
    use proptest::prelude::*;

    #[test]
    fn return_examples() {
        let r = compute_return_of(&[-0.1, -0.1, 4.0], 1.0);
        assert!((r.undiscounted - 3.8).abs() < 1e-12);
        assert_eq!(r.undiscounted, r.discounted);
        let r = compute_return_of(&[1.0, 1.0], 0.99);
        assert!((r.discounted - 1.99).abs() < 1e-12);
        let r = compute_return_of(&[], 0.5);
        assert_eq!((r.undiscounted, r.discounted), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn undiscounted_return_is_additive(a in prop::collection::vec(-10.0f64..10.0, 0..20),
                                           b in prop::collection::vec(-10.0f64..10.0, 0..20)) {
            let joined: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
            let lhs = compute_return_of(&joined, 1.0).undiscounted;
            let rhs = compute_return_of(&a, 1.0).undiscounted + compute_return_of(&b, 1.0).undiscounted;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_lake_resets_to_start() {
        let mut env = FrozenLake::standard(true);
        for seed in [0, 1, u64::MAX] {
            assert_eq!(env.reset(seed).discrete_index, Some(0));
        }
    }

    #[test]
    fn cartpole_reset_is_deterministic() {
        let mut env = CartPole::episodic();
        let a = env.reset(42);
        let b = env.reset(42);
        assert_eq!(a, b);
        assert_eq!(a.encoding.len(), 4);
        assert_ne!(a, env.reset(43));
    }

    #[test]
    fn deterministic_path_reaches_goal_in_six_moves() {
        let mut env = FrozenLake::standard(false);
        // down, down, right, down, right, right  (0 = left, 1 = down, 2 = right, 3 = up)
        let plan = [1usize, 1, 2, 1, 2, 2];
        let mut i = 0;
        let mut policy = |_: &Observation| {
            let a = Action::Discrete(plan[i]);
            i += 1;
            a
        };
        let trace = run_episode(&mut env, &mut policy, 100, 0).unwrap();
        assert_eq!(trace.len(), 6);
        assert_eq!(trace.steps.last().unwrap().reward, 1.0);
        assert!(trace.steps.last().unwrap().terminal);
        assert!(!trace.truncated);
    }

    #[test]
    fn turn_limit_truncates() {
        // Left from the start cell of the deterministic lake is a wall bump forever.
        let mut env = FrozenLake::standard(false);
        let mut policy = |_: &Observation| Action::Discrete(0);
        let trace = run_episode(&mut env, &mut policy, 100, 3).unwrap();
        assert_eq!(trace.len(), 100);
        assert!(trace.truncated);
        assert!(trace.steps.iter().all(|s| !s.terminal));
    }

    #[test]
    fn traces_replay_identically() {
        let mut env = FrozenLake::standard(true);
        let run = |env: &mut FrozenLake| {
            let mut k = 0usize;
            let mut policy = |_: &Observation| {
                k += 1;
                Action::Discrete(k % 4)
            };
            run_episode(env, &mut policy, 100, 99).unwrap()
        };
        let a = run(&mut env);
        let b = run(&mut env);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let mut env = FrozenLake::standard(true);
        env.reset(0);
        assert!(matches!(env.step(&Action::Discrete(4)), Err(EnvError::InvalidAction(_))));
        assert!(matches!(env.step(&Action::Continuous(vec![0.0])), Err(EnvError::InvalidAction(_))));
    }

    #[test]
    fn stepping_after_terminal_is_an_error() {
        let mut env = FrozenLake::standard(false);
        env.reset(0);
        env.step(&Action::Discrete(1)).unwrap(); // (1,0)
        let out = env.step(&Action::Discrete(2)).unwrap(); // (1,1) hole
        assert!(out.terminal);
        assert_eq!(out.reward, 0.0);
        assert_eq!(env.step(&Action::Discrete(0)), Err(EnvError::EpisodeOver));
    }
}
