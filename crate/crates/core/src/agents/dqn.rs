use rand::Rng;

use super::{AgentConfig, AgentError, CurveRecorder, RewardChannel, RunResult, TrainedModel};
use crate::mdp::{Action, Environment};
use crate::nn::{optimizer_step, DenseNet, GradientSet, Head, OptimizerState};
use crate::rng::{RunSeed, Stream};
use crate::shaper::ThresholdState;

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub observation: Vec<f64>,
    pub action: usize,
    /// Reward the learner trains on (shaped in the shaped arm).
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// No bootstrap from `next_observation`.
    pub done: bool,
}

/// Fixed-capacity ring; the oldest entry is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Experience>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.next] = e;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// Uniform draws with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Experience> {
        (0..batch).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

/// One-step targets `r + gamma * max_a Q_target(s', a)`, or `r` when done.
pub fn td_targets(target: &DenseNet, batch: &[&Experience], gamma: f64) -> Result<Vec<f64>, AgentError> {
    batch
        .iter()
        .map(|e| {
            if e.done {
                return Ok(e.reward);
            }
            let q = target.forward(&e.next_observation)?;
            Ok(e.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

/// Gradient of the mean Huber loss between `Q(s, a)` and the targets.
pub fn dqn_gradients(
    online: &DenseNet,
    batch: &[&Experience],
    targets: &[f64],
) -> Result<(GradientSet, f64), AgentError> {
    let mut grads = GradientSet::zeros_like(online);
    let mut loss = 0.0;
    let n = batch.len() as f64;
    let mut upstream = vec![0.0; online.output_dim()];
    for (e, &y) in batch.iter().zip(targets) {
        let trace = online.forward_trace(&e.observation)?;
        let d = trace.output()[e.action] - y;
        loss += if d.abs() <= 1.0 { 0.5 * d * d } else { d.abs() - 0.5 };
        upstream.iter_mut().for_each(|u| *u = 0.0);
        upstream[e.action] = d.clamp(-1.0, 1.0) / n;
        online.accumulate(&trace, &upstream, &mut grads)?;
    }
    Ok((grads, loss / n))
}

fn greedy(net: &DenseNet, obs: &[f64]) -> Result<usize, AgentError> {
    let q = net.forward(obs)?;
    let mut best = 0;
    for a in 1..q.len() {
        if q[a] > q[best] {
            best = a;
        }
    }
    Ok(best)
}

/// DQN with uniform replay and a hard-copied target network.
pub fn train_dqn<E: Environment + ?Sized>(
    env: &mut E,
    config: &AgentConfig,
    threshold: Option<ThresholdState>,
    seed: u64,
) -> Result<RunResult, AgentError> {
    config.validate()?;
    let actions = env
        .action_spec()
        .discrete_count()
        .ok_or_else(|| AgentError::Unsupported("DQN needs a discrete action space".into()))?;
    let run_seed = RunSeed(seed);
    let mut explore = run_seed.stream(Stream::Exploration);
    let mut replay_rng = run_seed.stream(Stream::Replay);
    let mut init_rng = run_seed.stream(Stream::Init);

    let mut dims = vec![env.observation_dim()];
    dims.extend(&config.hidden);
    dims.push(actions);
    let mut online = DenseNet::new(&dims, config.activation, Head::Linear, &mut init_rng);
    let mut target = online.clone();
    let mut opt = OptimizerState::new(config.optimizer, &online);
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut channel = RewardChannel::new(threshold, 1);
    let mut curve = CurveRecorder::new(env.is_continuing(), config.window, 1);
    let (mut episodes, mut frames) = (0u64, 0u64);

    let mut obs = env.reset(run_seed.episode_seed(0)).encoding;
    while !config.budget.exhausted(episodes, frames) {
        let epsilon = config.epsilon.value(frames, episodes);
        let a = if explore.gen::<f64>() < epsilon { explore.gen_range(0..actions) } else { greedy(&online, &obs)? };
        let outcome = env.step(&Action::Discrete(a))?;
        frames += 1;
        let fraction = config.budget.fraction(episodes, frames);
        let routed = channel.route(0, &outcome, fraction);
        let done = outcome.ends_episode();
        let next = outcome.next_observation.encoding.clone();
        replay.push(Experience {
            observation: obs,
            action: a,
            reward: routed.reward,
            next_observation: next.clone(),
            done,
        });
        curve.record(0, &outcome, routed.rho_used, &channel, Some(epsilon), frames);

        if frames >= config.learning_starts && replay.len() >= config.batch_size {
            let batch = replay.sample(config.batch_size, &mut replay_rng);
            let targets = td_targets(&target, &batch, config.gamma)?;
            let (mut grads, _) = dqn_gradients(&online, &batch, &targets)?;
            if let Some(n) = config.max_grad_norm {
                grads.clip_norm(n);
            }
            optimizer_step(&mut online, &grads, &mut opt, config.learning_rate);
        }
        if frames.is_multiple_of(config.target_update) {
            target.copy_from(&online);
        }

        obs = if done {
            episodes += 1;
            env.reset(run_seed.episode_seed(episodes)).encoding
        } else {
            next
        };
    }
    Ok(RunResult {
        seed,
        curve: curve.points,
        threshold: channel.into_threshold(),
        frames,
        model: TrainedModel::QNetwork(online),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{Budget, DecayUnit, EpsilonSchedule};
    use crate::env::{CartPole, MountainCar};
    use crate::nn::Activation;
    use crate::shaper::{BetaSchedule, ThresholdMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp(tag: f64, done: bool) -> Experience {
        Experience { observation: vec![tag], action: 0, reward: tag, next_observation: vec![tag], done }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(exp(i as f64, false));
        }
        assert_eq!(buf.len(), 3);
        let mut tags: Vec<f64> = buf.iter().map(|e| e.reward).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_covers_contents_uniformly() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..4 {
            buf.push(exp(i as f64, false));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for e in buf.sample(n, &mut rng) {
            counts[e.reward as usize] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        assert!(counts.iter().all(|&c| (c as f64 - n as f64 / 4.0).abs() < 4.0 * sigma));
    }

    #[test]
    fn terminal_target_is_reward_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseNet::new(&[1, 4, 2], Activation::Relu, Head::Linear, &mut rng);
        let done = exp(0.7, true);
        let live = exp(0.7, false);
        let t = td_targets(&net, &[&done, &live], 0.9).unwrap();
        assert_eq!(t[0], 0.7);
        let q = net.forward(&[0.7]).unwrap();
        assert!((t[1] - (0.7 + 0.9 * q[0].max(q[1]))).abs() < 1e-15);
    }

    #[test]
    fn huber_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::new(&[2, 5, 3], Activation::Tanh, Head::Linear, &mut rng);
        let batch: Vec<Experience> = (0..6)
            .map(|i| Experience {
                observation: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                action: i % 3,
                reward: 0.0,
                next_observation: vec![0.0, 0.0],
                done: true,
            })
            .collect();
        let refs: Vec<&Experience> = batch.iter().collect();
        let targets: Vec<f64> = (0..6).map(|i| [-3.0, 0.2, 2.5][i % 3]).collect();
        let (grads, _) = dqn_gradients(&net, &refs, &targets).unwrap();
        let loss = |n: &DenseNet| dqn_gradients(n, &refs, &targets).unwrap().1;
        let h = 1e-6;
        let analytic: Vec<f64> = grads.values().collect();
        for (k, g) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *plus.parameters_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.parameters_mut().nth(k).unwrap() -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-6 + 1e-4 * fd.abs().max(g.abs()), "param {k}: {fd} vs {g}");
        }
    }

    fn small_config() -> AgentConfig {
        AgentConfig {
            learning_rate: 0.001,
            epsilon: EpsilonSchedule { start: 1.0, decay: 0.9999, every: 1, floor: 0.01, unit: DecayUnit::Steps },
            hidden: vec![32, 32],
            activation: Activation::Relu,
            learning_starts: 100,
            max_grad_norm: None,
            window: 100,
            budget: Budget::Frames(1_000),
            ..AgentConfig::default()
        }
    }

    #[test]
    fn continuing_run_reports_windows() {
        let schedule = BetaSchedule::default_staircase();
        let t = ThresholdState::new(0.0, 100, schedule, ThresholdMode::Continuing { gamma: 0.99 }).unwrap();
        let run = train_dqn(&mut CartPole::continuing(), &small_config(), Some(t), 4).unwrap();
        assert_eq!(run.frames, 1_000);
        assert_eq!(run.curve.len(), 10);
        assert_eq!(run.curve.last().unwrap().steps, 1_000);
        assert_eq!(run.threshold.unwrap().updates(), 10);
        assert!(run.curve.iter().all(|p| p.ret <= 0.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = train_dqn(&mut CartPole::episodic(), &small_config(), None, 8).unwrap();
        let b = train_dqn(&mut CartPole::episodic(), &small_config(), None, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn continuous_actions_are_rejected() {
        let err = train_dqn(&mut MountainCar::new(), &small_config(), None, 0);
        assert!(matches!(err, Err(AgentError::Unsupported(_))));
    }
}
