//! Self-improvement based terminal-reward shaping for reinforcement learning.
//!
//! The crate replaces the terminal reward of an episode with `G - rho`, the
//! difference between the episode's return and a slowly moving performance
//! threshold, and keeps every other step reward untouched. Around that shaper
//! it provides everything needed to study the effect:
//!
//! * [`mdp`]: the environment contract, episode rollouts and returns.
//! * [`env`]: FrozenLake, DoorKey, MultiRoom, CartPole (episodic and
//!   continuing) and continuous MountainCar.
//! * [`shaper`]: the threshold state, beta schedules and the reward transform.
//! * [`nn`]: a small dense network with hand-written backpropagation.
//! * [`agents`]: tabular Q-learning, DQN and A2C, each with an optional shaper.
//! * [`oracle`]: value iteration and Monte-Carlo checks of the threshold dynamics.
//! * [`harness`]: declarative experiments, sweeps, transfer runs, CSV and SVG output.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod agents;
pub mod env;
pub mod harness;
pub mod mdp;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod shaper;
pub mod stats;

pub use mdp::{Action, ActionSpec, EnvError, Environment, EpisodeTrace, Observation, ReturnValue, StepOutcome};
pub use shaper::{BetaSchedule, ShapedReward, ThresholdMode, ThresholdState};
