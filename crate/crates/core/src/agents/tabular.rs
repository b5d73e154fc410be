use rand::Rng;

use super::{AgentConfig, AgentError, CurveRecorder, RewardChannel, RunResult, TrainedModel};
use crate::mdp::{Action, Environment};
use crate::rng::{RunSeed, Stream};
use crate::shaper::ThresholdState;

/// Action values, row-major over `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self { states, actions, values: vec![0.0; states * actions] }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &q) in row.iter().enumerate().skip(1) {
            if q > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.states).map(|s| self.argmax(s)).collect()
    }

    /// One Q-learning backup. `next` is `None` when the episode ended on this
    /// transition, so nothing is bootstrapped.
    pub fn q_update(&mut self, s: usize, a: usize, reward: f64, next: Option<usize>, alpha: f64, gamma: f64) {
        let bootstrap = next.map_or(0.0, |n| gamma * self.max(n));
        let q = self.get(s, a);
        self.set(s, a, q + alpha * (reward + bootstrap - q));
    }
}

/// With probability `1 - epsilon` the greedy action, else a uniform one.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.actions)
    } else {
        q.argmax(s)
    }
}

/// Q-learning with an optional threshold. Returns on the curve are original
/// rewards; the learner sees shaped ones.
pub fn train_tabular_q<E: Environment + ?Sized>(
    env: &mut E,
    config: &AgentConfig,
    threshold: Option<ThresholdState>,
    seed: u64,
) -> Result<RunResult, AgentError> {
    config.validate()?;
    let states = env
        .state_count()
        .ok_or_else(|| AgentError::Unsupported("tabular Q-learning needs a tabular environment".into()))?;
    let actions = env
        .action_spec()
        .discrete_count()
        .ok_or_else(|| AgentError::Unsupported("tabular Q-learning needs discrete actions".into()))?;
    let run_seed = RunSeed(seed);
    let mut rng = run_seed.stream(Stream::Exploration);
    let mut q = QTable::new(states, actions);
    let mut channel = RewardChannel::new(threshold, 1);
    let mut curve = CurveRecorder::new(env.is_continuing(), config.window, 1);
    let (mut episodes, mut frames) = (0u64, 0u64);

    'episodes: while !config.budget.exhausted(episodes, frames) {
        let mut s = index_of(&env.reset(run_seed.episode_seed(episodes)))?;
        loop {
            let epsilon = config.epsilon.value(frames, episodes);
            let a = epsilon_greedy(&q, s, epsilon, &mut rng);
            let outcome = env.step(&Action::Discrete(a))?;
            frames += 1;
            let fraction = config.budget.fraction(episodes, frames);
            let routed = channel.route(0, &outcome, fraction);
            let next = index_of(&outcome.next_observation)?;
            let bootstrap = (!outcome.ends_episode()).then_some(next);
            q.q_update(s, a, routed.reward, bootstrap, config.learning_rate, config.gamma);
            curve.record(0, &outcome, routed.rho_used, &channel, Some(epsilon), frames);
            if outcome.ends_episode() {
                episodes += 1;
                continue 'episodes;
            }
            if config.budget.exhausted(episodes, frames) {
                break 'episodes;
            }
            s = next;
        }
    }
    Ok(RunResult {
        seed,
        curve: curve.points,
        threshold: channel.into_threshold(),
        frames,
        model: TrainedModel::QTable(q),
    })
}

fn index_of(obs: &crate::mdp::Observation) -> Result<usize, AgentError> {
    obs.discrete_index.ok_or_else(|| AgentError::Unsupported("observation carries no state index".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Budget, EpsilonSchedule};
    use crate::env::{CartPole, FrozenLake};
    use crate::mdp::{ActionSpec, EnvError, Observation, StepOutcome};
    use crate::shaper::BetaSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_update_from_zero() {
        let mut q = QTable::new(2, 2);
        q.q_update(0, 1, 1.0, Some(1), 0.1, 0.99);
        assert!((q.get(0, 1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_td_error_leaves_value() {
        let mut q = QTable::new(2, 2);
        q.set(1, 0, 2.0);
        q.set(0, 0, 0.99 * 2.0);
        q.q_update(0, 0, 0.0, Some(1), 0.1, 0.99);
        assert_eq!(q.get(0, 0), 0.99 * 2.0);
    }

    #[test]
    fn random_tableau_update_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let mut q = QTable::new(5, 3);
            for s in 0..5 {
                for a in 0..3 {
                    q.set(s, a, rng.gen_range(-5.0..5.0));
                }
            }
            let (s, a, n) = (rng.gen_range(0..5), rng.gen_range(0..3), rng.gen_range(0..5));
            let (r, alpha, gamma) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let before = q.clone();
            q.q_update(s, a, r, Some(n), alpha, gamma);
            let best = (0..3).map(|b| before.get(n, b)).fold(f64::MIN, f64::max);
            let expected = before.get(s, a) + alpha * (r + gamma * best - before.get(s, a));
            assert_eq!(q.get(s, a), expected);
        }
    }

    #[test]
    fn terminal_update_does_not_bootstrap() {
        let mut q = QTable::new(2, 1);
        q.set(1, 0, 100.0);
        q.q_update(0, 0, 1.0, None, 0.5, 0.99);
        assert_eq!(q.get(0, 0), 0.5);
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = QTable::new(2, 3);
        q.set(0, 1, 3.0);
        q.set(0, 2, 1.0);
        assert_eq!(epsilon_greedy(&q, 0, 0.0, &mut rng), 1);
        let mut tie = QTable::new(1, 2);
        tie.set(0, 0, 2.0);
        tie.set(0, 1, 2.0);
        assert_eq!(epsilon_greedy(&tie, 0, 0.0, &mut rng), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = QTable::new(1, 4);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[epsilon_greedy(&q, 0, 1.0, &mut rng)] += 1;
        }
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    /// s0 -a0-> s0 (reward 0); s0 -a1-> s1 (reward 0); s1 -any-> terminal s2 (reward 1).
    #[derive(Clone)]
    struct Chain {
        state: usize,
    }

    impl Environment for Chain {
        fn action_spec(&self) -> ActionSpec {
            ActionSpec::Discrete { count: 2 }
        }
        fn observation_dim(&self) -> usize {
            3
        }
        fn state_count(&self) -> Option<usize> {
            Some(3)
        }
        fn turn_limit(&self) -> usize {
            usize::MAX
        }
        fn reset(&mut self, _seed: u64) -> Observation {
            self.state = 0;
            Observation::tabular(0, 3)
        }
        fn step(&mut self, action: &Action) -> Result<StepOutcome, EnvError> {
            let a = action.index().unwrap();
            let (next, reward, terminal) = match (self.state, a) {
                (0, 0) => (0, 0.0, false),
                (0, _) => (1, 0.0, false),
                _ => (2, 1.0, true),
            };
            self.state = next;
            Ok(StepOutcome { reward, next_observation: Observation::tabular(next, 3), terminal, truncated: false })
        }
    }

    #[test]
    fn chain_converges_to_dynamic_programming_values() {
        // exact optimum with gamma = 0.9: Q(s1,.) = 1, Q(s0,a1) = 0.9, Q(s0,a0) = 0.81
        let config = AgentConfig {
            learning_rate: 0.5,
            gamma: 0.9,
            epsilon: EpsilonSchedule::fixed(1.0),
            budget: Budget::Episodes(50),
            ..AgentConfig::default()
        };
        let run = train_tabular_q(&mut Chain { state: 0 }, &config, None, 1).unwrap();
        let TrainedModel::QTable(q) = run.model else { panic!() };
        let expected = [[0.81, 0.9], [1.0, 1.0], [0.0, 0.0]];
        for (s, row) in expected.iter().enumerate() {
            for (a, want) in row.iter().enumerate() {
                assert!((q.get(s, a) - want).abs() < 1e-6, "Q({s},{a}) = {}", q.get(s, a));
            }
        }
        assert_eq!(run.curve.len(), 50);
        assert!(run.curve.iter().all(|p| p.ret == 1.0));
    }

    #[test]
    fn terminal_rows_stay_zero() {
        let mut env = FrozenLake::standard(true);
        let config = AgentConfig { budget: Budget::Episodes(300), ..AgentConfig::default() };
        let t = ThresholdState::episodic(BetaSchedule::default_staircase()).unwrap();
        let run = train_tabular_q(&mut env, &config, Some(t), 3).unwrap();
        let TrainedModel::QTable(q) = run.model else { panic!() };
        for s in [5, 7, 11, 12, 15] {
            assert!(q.row(s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn first_episode_matches_across_arms() {
        let config = AgentConfig { budget: Budget::Episodes(1), ..AgentConfig::default() };
        let t = ThresholdState::episodic(BetaSchedule::default_staircase()).unwrap();
        let plain = train_tabular_q(&mut FrozenLake::standard(true), &config, None, 11).unwrap();
        let shaped = train_tabular_q(&mut FrozenLake::standard(true), &config, Some(t), 11).unwrap();
        assert_eq!(plain.frames, shaped.frames);
        assert_eq!(plain.curve[0].ret, shaped.curve[0].ret);
        assert_eq!(plain.model, shaped.model);
    }

    #[test]
    fn frozen_zero_threshold_matches_baseline() {
        // with rho pinned at zero the terminal reward is G, which on the lake
        // equals the final reward, so the two runs coincide exactly
        let config = AgentConfig { budget: Budget::Episodes(500), ..AgentConfig::default() };
        let plain = train_tabular_q(&mut FrozenLake::standard(true), &config, None, 2).unwrap();
        let frozen =
            train_tabular_q(&mut FrozenLake::standard(true), &config, Some(ThresholdState::frozen(0.0)), 2).unwrap();
        assert_eq!(plain.model, frozen.model);
        assert_eq!(plain.returns(), frozen.returns());
    }

    #[test]
    fn same_seed_same_run() {
        let config = AgentConfig { budget: Budget::Episodes(200), ..AgentConfig::default() };
        let t = ThresholdState::episodic(BetaSchedule::default_staircase()).unwrap();
        let a = train_tabular_q(&mut FrozenLake::standard(true), &config, Some(t.clone()), 9).unwrap();
        let b = train_tabular_q(&mut FrozenLake::standard(true), &config, Some(t), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_tabular_is_rejected() {
        let err = train_tabular_q(&mut CartPole::episodic(), &AgentConfig::default(), None, 0);
        assert!(matches!(err, Err(AgentError::Unsupported(_))));
    }
}
