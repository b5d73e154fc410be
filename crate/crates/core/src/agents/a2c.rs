use rand::Rng;
use rand_distr::StandardNormal;

use super::{AgentConfig, AgentError, CurveRecorder, RewardChannel, RunResult, TrainedModel};
use crate::mdp::{Action, ActionSpec, Environment, Observation};
use crate::nn::{optimizer_step, softmax, Activation, DenseNet, GradientSet, Head, OptimizerState};
use crate::rng::{RunSeed, Stream};
use crate::shaper::ThresholdState;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Discrete { actions: usize },
    Gaussian { low: Vec<f64>, high: Vec<f64> },
}

impl PolicyKind {
    fn from_spec(spec: &ActionSpec) -> Self {
        match spec {
            ActionSpec::Discrete { count } => PolicyKind::Discrete { actions: *count },
            ActionSpec::Continuous { low, high } => PolicyKind::Gaussian { low: low.clone(), high: high.clone() },
        }
    }

    fn actor_outputs(&self) -> usize {
        match self {
            PolicyKind::Discrete { actions } => *actions,
            PolicyKind::Gaussian { low, .. } => 2 * low.len(),
        }
    }
}

/// Separate policy and value networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub kind: PolicyKind,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        observation_dim: usize,
        spec: &ActionSpec,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let kind = PolicyKind::from_spec(spec);
        let head = match kind {
            PolicyKind::Discrete { .. } => Head::Softmax,
            PolicyKind::Gaussian { .. } => Head::gaussian(),
        };
        let dims = |out: usize| {
            let mut d = vec![observation_dim];
            d.extend(hidden);
            d.push(out);
            d
        };
        let actor = DenseNet::new(&dims(kind.actor_outputs()), activation, head, rng);
        let critic = DenseNet::new(&dims(1), activation, Head::Linear, rng);
        Self { actor, critic, kind }
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64, AgentError> {
        Ok(self.critic.forward(observation)?[0])
    }

    /// Samples an action. Gaussian samples are returned unclipped; the
    /// environment receives them clipped to the action bounds.
    pub fn sample<R: Rng + ?Sized>(&self, observation: &[f64], rng: &mut R) -> Result<Action, AgentError> {
        let out = self.actor.forward(observation)?;
        Ok(match &self.kind {
            PolicyKind::Discrete { .. } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = out.len() - 1;
                for (a, p) in out.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = a;
                        break;
                    }
                }
                Action::Discrete(pick)
            }
            PolicyKind::Gaussian { low, .. } => {
                let d = low.len();
                Action::Continuous(
                    (0..d)
                        .map(|k| {
                            let z: f64 = rng.sample(StandardNormal);
                            out[k] + out[d + k].exp() * z
                        })
                        .collect(),
                )
            }
        })
    }

    /// Most likely action (mode of the policy).
    pub fn greedy(&self, observation: &[f64]) -> Result<Action, AgentError> {
        let out = self.actor.forward(observation)?;
        Ok(match &self.kind {
            PolicyKind::Discrete { .. } => {
                let mut best = 0;
                for a in 1..out.len() {
                    if out[a] > out[best] {
                        best = a;
                    }
                }
                Action::Discrete(best)
            }
            PolicyKind::Gaussian { low, .. } => Action::Continuous(out[..low.len()].to_vec()),
        })
    }

    fn to_env(&self, action: &Action) -> Action {
        match (&self.kind, action) {
            (PolicyKind::Gaussian { low, high }, Action::Continuous(raw)) => {
                Action::Continuous(raw.iter().zip(low.iter().zip(high)).map(|(a, (l, h))| a.clamp(*l, *h)).collect())
            }
            _ => action.clone(),
        }
    }
}

/// One training sample: the advantage and value target are fixed numbers
/// computed before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSample {
    pub observation: Vec<f64>,
    pub action: Action,
    pub target: f64,
    pub advantage: f64,
}

struct SampleTerms {
    loss: f64,
    d_actor: Vec<f64>,
    d_value: f64,
}

fn sample_terms(
    model: &ActorCritic,
    actor_out: &[f64],
    actor_logits: &[f64],
    value: f64,
    s: &RolloutSample,
    entropy_coef: f64,
    value_coef: f64,
) -> SampleTerms {
    let v_err = value - s.target;
    let value_loss = value_coef * v_err * v_err;
    let d_value = 2.0 * value_coef * v_err;
    match (&model.kind, &s.action) {
        (PolicyKind::Discrete { .. }, Action::Discrete(a)) => {
            // gradients are taken with respect to the logits
            let p = softmax(actor_logits);
            let log_p: Vec<f64> = p.iter().map(|x| x.max(1e-300).ln()).collect();
            let entropy: f64 = -p.iter().zip(&log_p).map(|(p, l)| p * l).sum::<f64>();
            let loss = -log_p[*a] * s.advantage - entropy_coef * entropy + value_loss;
            let d_actor = (0..p.len())
                .map(|k| {
                    let onehot = if k == *a { 1.0 } else { 0.0 };
                    s.advantage * (p[k] - onehot) + entropy_coef * p[k] * (log_p[k] + entropy)
                })
                .collect();
            SampleTerms { loss, d_actor, d_value }
        }
        (PolicyKind::Gaussian { low, .. }, Action::Continuous(raw)) => {
            // gradients are taken with respect to the head outputs
            let d = low.len();
            let mut log_prob = 0.0;
            let mut entropy = 0.0;
            let mut d_actor = vec![0.0; 2 * d];
            for k in 0..d {
                let (mu, ls) = (actor_out[k], actor_out[d + k]);
                let sigma = ls.exp();
                let z = (raw[k] - mu) / sigma;
                log_prob += -0.5 * z * z - ls - HALF_LN_2PI;
                entropy += ls + HALF_LN_2PI + 0.5;
                d_actor[k] = -s.advantage * z / sigma;
                d_actor[d + k] = -s.advantage * (z * z - 1.0) - entropy_coef;
            }
            let loss = -log_prob * s.advantage - entropy_coef * entropy + value_loss;
            SampleTerms { loss, d_actor, d_value }
        }
        _ => panic!("action does not match the policy head"),
    }
}

/// Mean over the batch of `-log pi(a|s) A - c_H H(pi(s)) + c_V (target - V(s))^2`.
pub fn a2c_loss(
    model: &ActorCritic,
    batch: &[RolloutSample],
    entropy_coef: f64,
    value_coef: f64,
) -> Result<f64, AgentError> {
    let mut total = 0.0;
    for s in batch {
        let trace = model.actor.forward_trace(&s.observation)?;
        let v = model.value(&s.observation)?;
        total += sample_terms(model, trace.output(), trace.logits(), v, s, entropy_coef, value_coef).loss;
    }
    Ok(total / batch.len() as f64)
}

/// Gradients of [`a2c_loss`] for the actor and the critic.
pub fn a2c_gradients(
    model: &ActorCritic,
    batch: &[RolloutSample],
    entropy_coef: f64,
    value_coef: f64,
) -> Result<(GradientSet, GradientSet, f64), AgentError> {
    let n = batch.len() as f64;
    let mut actor_grads = GradientSet::zeros_like(&model.actor);
    let mut critic_grads = GradientSet::zeros_like(&model.critic);
    let mut total = 0.0;
    for s in batch {
        let at = model.actor.forward_trace(&s.observation)?;
        let ct = model.critic.forward_trace(&s.observation)?;
        let terms = sample_terms(model, at.output(), at.logits(), ct.output()[0], s, entropy_coef, value_coef);
        total += terms.loss;
        let scaled: Vec<f64> = terms.d_actor.iter().map(|g| g / n).collect();
        match model.kind {
            PolicyKind::Discrete { .. } => model.actor.accumulate_from_logits(&at, &scaled, &mut actor_grads),
            PolicyKind::Gaussian { .. } => model.actor.accumulate(&at, &scaled, &mut actor_grads)?,
        }
        model.critic.accumulate(&ct, &[terms.d_value / n], &mut critic_grads)?;
    }
    Ok((actor_grads, critic_grads, total / n))
}

/// State carried from one training stage to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ActorCritic,
    pub threshold: Option<ThresholdState>,
    pub frames: u64,
}

/// Packages a finished actor-critic run for training on `new_env`.
pub fn transfer_checkpoint<E: Environment + ?Sized>(run: &RunResult, new_env: &E) -> Result<Checkpoint, AgentError> {
    let TrainedModel::ActorCritic(model) = &run.model else {
        return Err(AgentError::Checkpoint("only actor-critic runs can be resumed".into()));
    };
    if model.actor.input_dim() != new_env.observation_dim() {
        return Err(AgentError::Checkpoint(format!(
            "observation size {} does not match the network input {}",
            new_env.observation_dim(),
            model.actor.input_dim()
        )));
    }
    if PolicyKind::from_spec(&new_env.action_spec()) != model.kind {
        return Err(AgentError::Checkpoint("action sets differ".into()));
    }
    Ok(Checkpoint { model: model.clone(), threshold: run.threshold.clone(), frames: run.frames })
}

/// Synchronous n-step advantage actor-critic over `num_envs` copies of `env`.
pub fn train_a2c<E: Environment + Clone>(
    env: &E,
    config: &AgentConfig,
    threshold: Option<ThresholdState>,
    seed: u64,
) -> Result<RunResult, AgentError> {
    config.validate()?;
    let mut init = RunSeed(seed).stream(Stream::Init);
    let model =
        ActorCritic::new(env.observation_dim(), &env.action_spec(), &config.hidden, config.activation, &mut init);
    run_a2c(env, config, model, threshold, seed, 0)
}

/// Continues training from a checkpoint; the frame axis carries on from it.
pub fn resume_a2c<E: Environment + Clone>(
    env: &E,
    config: &AgentConfig,
    checkpoint: Checkpoint,
    seed: u64,
) -> Result<RunResult, AgentError> {
    config.validate()?;
    run_a2c(env, config, checkpoint.model, checkpoint.threshold, seed, checkpoint.frames)
}

struct Lane<E> {
    env: E,
    observation: Observation,
}

struct StepRecord {
    observation: Vec<f64>,
    action: Action,
    reward: f64,
    done: bool,
}

fn run_a2c<E: Environment + Clone>(
    env: &E,
    config: &AgentConfig,
    mut model: ActorCritic,
    threshold: Option<ThresholdState>,
    seed: u64,
    frame_offset: u64,
) -> Result<RunResult, AgentError> {
    let run_seed = RunSeed(seed);
    let mut policy_rng = run_seed.stream(Stream::Policy);
    let mut actor_opt = OptimizerState::new(config.optimizer, &model.actor);
    let mut critic_opt = OptimizerState::new(config.optimizer, &model.critic);
    let n_lanes = config.num_envs;
    let mut channel = RewardChannel::new(threshold, n_lanes);
    let mut curve = CurveRecorder::new(env.is_continuing(), config.window, n_lanes);
    let (mut episodes, mut frames) = (0u64, 0u64);
    let mut resets = 0u64;
    let mut lanes: Vec<Lane<E>> = (0..n_lanes)
        .map(|_| {
            let mut e = env.clone();
            let observation = e.reset(run_seed.episode_seed(resets));
            resets += 1;
            Lane { env: e, observation }
        })
        .collect();
    let mut records: Vec<Vec<StepRecord>> = (0..n_lanes).map(|_| Vec::with_capacity(config.rollout_len)).collect();

    while !config.budget.exhausted(episodes, frames) {
        for r in &mut records {
            r.clear();
        }
        'rollout: for _ in 0..config.rollout_len {
            for (i, lane) in lanes.iter_mut().enumerate() {
                if config.budget.exhausted(episodes, frames) {
                    break 'rollout;
                }
                let action = model.sample(&lane.observation.encoding, &mut policy_rng)?;
                let outcome = lane.env.step(&model.to_env(&action))?;
                frames += 1;
                let done = outcome.ends_episode();
                if done {
                    episodes += 1;
                }
                let fraction = config.budget.fraction(episodes, frames);
                let routed = channel.route(i, &outcome, fraction);
                curve.record(i, &outcome, routed.rho_used, &channel, None, frame_offset + frames);
                let observation = std::mem::replace(
                    &mut lane.observation,
                    if done {
                        resets += 1;
                        lane.env.reset(run_seed.episode_seed(resets - 1))
                    } else {
                        outcome.next_observation
                    },
                );
                records[i].push(StepRecord { observation: observation.encoding, action, reward: routed.reward, done });
            }
        }

        let mut batch = Vec::with_capacity(config.rollout_len * n_lanes);
        for (lane, steps) in lanes.iter().zip(&records) {
            let Some(last) = steps.last() else { continue };
            let mut ret = if last.done { 0.0 } else { model.value(&lane.observation.encoding)? };
            let mut lane_batch = Vec::with_capacity(steps.len());
            for step in steps.iter().rev() {
                if step.done {
                    ret = 0.0;
                }
                ret = step.reward + config.gamma * ret;
                let advantage = ret - model.value(&step.observation)?;
                lane_batch.push(RolloutSample {
                    observation: step.observation.clone(),
                    action: step.action.clone(),
                    target: ret,
                    advantage,
                });
            }
            lane_batch.reverse();
            batch.extend(lane_batch);
        }
        if batch.is_empty() {
            break;
        }
        let (mut ga, mut gc, _) = a2c_gradients(&model, &batch, config.entropy_coef, config.value_coef)?;
        if let Some(n) = config.max_grad_norm {
            ga.clip_norm(n);
            gc.clip_norm(n);
        }
        optimizer_step(&mut model.actor, &ga, &mut actor_opt, config.learning_rate);
        optimizer_step(&mut model.critic, &gc, &mut critic_opt, config.learning_rate);
    }
    Ok(RunResult {
        seed,
        curve: curve.points,
        threshold: channel.into_threshold(),
        frames: frame_offset + frames,
        model: TrainedModel::ActorCritic(model),
    })
}
