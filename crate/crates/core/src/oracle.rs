//! Ground truth for tabular tasks and statistical checks of the threshold
//! recursion.
//!
//! [`value_iteration`] gives `V*`, `pi*` and `rho* = V*(s0)`.
//! [`verify_threshold_dynamics`] drives the real [`ThresholdState`] with
//! returns drawn under an already converged policy and tests the three
//! possible regimes: a threshold below the attainable mean must rise without
//! overshooting it, one above must fall, and one sitting on it must stay put.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{Action, Environment};
use crate::rng::{RunSeed, Stream};
use crate::shaper::{BetaSchedule, ThresholdMode, ThresholdState};
use crate::stats::{self, Interval};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("environment has no explicit transition model")]
    NotTabular,
    #[error("value iteration did not reach tolerance {tolerance} within {iterations} sweeps")]
    NoConvergence { tolerance: f64, iterations: usize },
    #[error("invalid dynamics check: {0}")]
    InvalidCheck(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub probability: f64,
    pub next: usize,
    pub reward: f64,
}

/// Explicit finite MDP. Rewards are attached to the landing state; terminal
/// states absorb with value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    pub start: usize,
    pub terminal: Vec<bool>,
    /// `transitions[s][a]` lists the outcomes of taking `a` in `s`.
    pub transitions: Vec<Vec<Vec<Transition>>>,
}

impl TabularModel {
    pub fn state_count(&self) -> usize {
        self.transitions.len()
    }

    pub fn action_count(&self) -> usize {
        self.transitions.first().map_or(0, Vec::len)
    }

    fn q_value(&self, values: &[f64], s: usize, a: usize, gamma: f64) -> f64 {
        self.transitions[s][a]
            .iter()
            .map(|t| {
                let future = if self.terminal[t.next] { 0.0 } else { values[t.next] };
                t.probability * (t.reward + gamma * future)
            })
            .sum()
    }

    fn bellman(&self, values: &[f64], gamma: f64) -> Vec<f64> {
        (0..self.state_count())
            .map(|s| {
                if self.terminal[s] {
                    0.0
                } else {
                    (0..self.action_count())
                        .map(|a| self.q_value(values, s, a, gamma))
                        .fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    /// Greedy actions with the lowest index winning ties.
    pub fn greedy_policy(&self, values: &[f64], gamma: f64) -> Vec<usize> {
        (0..self.state_count())
            .map(|s| {
                let qs: Vec<f64> = (0..self.action_count()).map(|a| self.q_value(values, s, a, gamma)).collect();
                let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                qs.iter().position(|&q| q >= best - 1e-12).unwrap_or(0)
            })
            .collect()
    }

    /// Exact value of a deterministic policy by iterating its Bellman operator.
    pub fn evaluate_policy(&self, policy: &[usize], gamma: f64, tolerance: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.state_count()];
        for _ in 0..1_000_000 {
            let next: Vec<f64> = (0..self.state_count())
                .map(|s| if self.terminal[s] { 0.0 } else { self.q_value(&v, s, policy[s], gamma) })
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta <= tolerance {
                break;
            }
        }
        v
    }

    /// Expected undiscounted return from the start state when episodes are
    /// cut off after `horizon` steps.
    pub fn finite_horizon_return(&self, policy: &[usize], horizon: usize) -> f64 {
        let mut v = vec![0.0; self.state_count()];
        for _ in 0..horizon {
            v = (0..self.state_count())
                .map(|s| if self.terminal[s] { 0.0 } else { self.q_value(&v, s, policy[s], 1.0) })
                .collect();
        }
        v[self.start]
    }

    /// Non-terminal states reachable from the start under `policy`.
    pub fn reachable_states(&self, policy: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.state_count()];
        let mut stack = vec![self.start];
        seen[self.start] = true;
        while let Some(s) = stack.pop() {
            if self.terminal[s] {
                continue;
            }
            for t in &self.transitions[s][policy[s]] {
                if t.probability > 0.0 && !seen[t.next] {
                    seen[t.next] = true;
                    stack.push(t.next);
                }
            }
        }
        (0..self.state_count()).filter(|&s| seen[s] && !self.terminal[s]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub optimal_values: Vec<f64>,
    pub optimal_policy: Vec<usize>,
    pub rho_star: f64,
    pub gamma: f64,
    /// Sup-norm Bellman residual of `optimal_values`.
    pub residual: f64,
    pub sweeps: usize,
}

pub fn value_iteration(model: &TabularModel, gamma: f64, tolerance: f64) -> Result<OracleSolution, OracleError> {
    const MAX_SWEEPS: usize = 10_000_000;
    let mut v = vec![0.0; model.state_count()];
    for sweep in 1..=MAX_SWEEPS {
        let next = model.bellman(&v, gamma);
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta <= tolerance {
            let after = model.bellman(&v, gamma);
            let residual = after.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let optimal_policy = model.greedy_policy(&v, gamma);
            return Ok(OracleSolution {
                rho_star: v[model.start],
                optimal_values: v,
                optimal_policy,
                gamma,
                residual,
                sweeps: sweep,
            });
        }
    }
    Err(OracleError::NoConvergence { tolerance, iterations: MAX_SWEEPS })
}

pub fn solve_environment<E: Environment + ?Sized>(
    env: &E,
    gamma: f64,
    tolerance: f64,
) -> Result<OracleSolution, OracleError> {
    let model = env.tabular_model().ok_or(OracleError::NotTabular)?;
    value_iteration(&model, gamma, tolerance)
}

/// Monte-Carlo estimate of a tabular policy's discounted return from reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub episodes: usize,
}

/// Rolls out `policy` (indexed by tabular state) for `episodes` episodes in
/// parallel chunks. Each chunk clones `env` and uses its own seed, so the
/// estimate does not depend on the worker count.
pub fn monte_carlo_value<E>(
    env: &E,
    policy: &[usize],
    gamma: f64,
    episodes: usize,
    max_steps: usize,
    seed: u64,
) -> MonteCarloEstimate
where
    E: Environment + Clone + Sync,
{
    const CHUNK: usize = 10_000;
    let chunks = episodes.div_ceil(CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut env = env.clone();
            let seeds = RunSeed(seed);
            let count = CHUNK.min(episodes - c * CHUNK);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for i in 0..count {
                let mut obs = env.reset(seeds.episode_seed((c * CHUNK + i) as u64));
                let (mut g, mut w) = (0.0, 1.0);
                for _ in 0..max_steps {
                    let s = obs.discrete_index.expect("tabular environment");
                    let out = env.step(&Action::Discrete(policy[s])).expect("valid policy action");
                    g += w * out.reward;
                    w *= gamma;
                    if out.ends_episode() {
                        break;
                    }
                    obs = out.next_observation;
                }
                sum += g;
                sum_sq += g * g;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let n = episodes as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    MonteCarloEstimate { mean, std_error: (var / n).sqrt(), episodes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsCase {
    /// Threshold starts below the optimum.
    Below = 1,
    /// Threshold starts above the optimum.
    Above = 2,
    /// Threshold starts on the optimum.
    AtOptimum = 3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsPoint {
    pub update: usize,
    pub mean_rho: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub claim: String,
    pub passed: bool,
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsReport {
    pub case: DynamicsCase,
    pub rho_star: f64,
    pub rho0: f64,
    pub beta: f64,
    pub trials: usize,
    /// Family-wise confidence level over every interval in the report.
    pub confidence: f64,
    pub trajectory: Vec<DynamicsPoint>,
    pub verdicts: Vec<Verdict>,
}

impl DynamicsReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Columns: update, mean_rho, ci_low, ci_high.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OracleError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["update", "mean_rho", "ci_low", "ci_high"]).map_err(csv_io)?;
        for p in &self.trajectory {
            w.write_record([p.update.to_string(), p.mean_rho.to_string(), p.ci_low.to_string(), p.ci_high.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> OracleError {
    OracleError::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsSpec {
    pub rho_star: f64,
    pub rho0: f64,
    pub beta: f64,
    pub num_updates: usize,
    pub num_trials: usize,
    /// Family-wise confidence, split across intervals with a Bonferroni correction.
    pub confidence: f64,
    pub seed: u64,
}

/// Runs `num_trials` independent thresholds for `num_updates` updates each,
/// every update fed one return from `sampler`, and tests the regime implied
/// by `rho0` versus `rho_star`.
pub fn verify_threshold_dynamics<F>(sampler: F, spec: DynamicsSpec) -> Result<DynamicsReport, OracleError>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if spec.num_trials < 2 || spec.num_updates == 0 {
        return Err(OracleError::InvalidCheck("need at least two trials and one update".into()));
    }
    let case = if spec.rho0 < spec.rho_star {
        DynamicsCase::Below
    } else if spec.rho0 > spec.rho_star {
        DynamicsCase::Above
    } else {
        DynamicsCase::AtOptimum
    };
    let schedule = BetaSchedule::constant(spec.beta);
    schedule.validate().map_err(|e| OracleError::InvalidCheck(e.to_string()))?;
    let t_max = spec.num_updates;
    // paths[trial][t] = rho_t
    let paths: Vec<Vec<f64>> = (0..spec.num_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(RunSeed(spec.seed).episode_seed(trial as u64));
            rng.set_stream(Stream::Oracle as u64);
            let mut threshold =
                ThresholdState::new(spec.rho0, 1, schedule, ThresholdMode::Episodic).expect("validated schedule");
            let mut path = Vec::with_capacity(t_max + 1);
            path.push(threshold.rho());
            for t in 0..t_max {
                threshold.record_return(sampler(&mut rng), t as f64 / t_max as f64);
                path.push(threshold.rho());
            }
            path
        })
        .collect();

    let column = |t: usize| paths.iter().map(|p| p[t]).collect::<Vec<f64>>();
    let increment = |t: usize| paths.iter().map(|p| p[t + 1] - p[t]).collect::<Vec<f64>>();

    // level intervals for t = 1..=T and increment intervals for t = 0..T
    let intervals = 2 * t_max;
    let alpha = (1.0 - spec.confidence) / intervals as f64;
    let levels: Vec<Interval> = (0..=t_max).map(|t| stats::t_interval(&column(t), alpha)).collect();
    let steps: Vec<Interval> = (0..t_max).map(|t| stats::t_interval(&increment(t), alpha)).collect();

    let trajectory = levels
        .iter()
        .enumerate()
        .map(|(t, iv)| DynamicsPoint { update: t, mean_rho: iv.mean, ci_low: iv.low, ci_high: iv.high })
        .collect();

    let check = |claim: &str, ok: &dyn Fn(usize) -> bool, range: std::ops::Range<usize>| {
        let failures: Vec<usize> = range.filter(|&t| !ok(t)).collect();
        Verdict { claim: claim.to_string(), passed: failures.is_empty(), failures }
    };
    let rho_star = spec.rho_star;
    let verdicts = match case {
        DynamicsCase::Below => vec![
            check("E[rho_t+1] > E[rho_t]", &|t| steps[t].low > 0.0, 0..t_max),
            check("E[rho_t] < rho*", &|t| levels[t].high < rho_star, 1..t_max + 1),
        ],
        DynamicsCase::Above => vec![check("E[rho_t+1] < E[rho_t]", &|t| steps[t].high < 0.0, 0..t_max)],
        DynamicsCase::AtOptimum => vec![
            check("E[rho_t+1] = E[rho_t]", &|t| steps[t].contains(0.0), 0..t_max),
            check("E[rho_t] = rho*", &|t| levels[t].contains(rho_star), 1..t_max + 1),
        ],
    };
    Ok(DynamicsReport {
        case,
        rho_star,
        rho0: spec.rho0,
        beta: spec.beta,
        trials: spec.num_trials,
        confidence: spec.confidence,
        trajectory,
        verdicts,
    })
}

/// Bernoulli sampler: return 1 with probability `p`, else 0.
pub fn bernoulli_sampler(p: f64) -> impl Fn(&mut ChaCha8Rng) -> f64 + Sync {
    move |rng: &mut ChaCha8Rng| if rng.gen_bool(p) { 1.0 } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub learned_value: MonteCarloEstimate,
    pub rho_star: f64,
    pub value_gap: f64,
    pub relative_gap: f64,
    /// Fraction of states reachable under the oracle policy where both policies agree.
    pub agreement: f64,
    pub tolerance: f64,
    pub flagged: bool,
}

/// Compares a learned tabular policy against the oracle: Monte-Carlo value
/// from the start state against `rho*`, and action agreement on the states
/// the oracle policy visits.
pub fn policy_equivalence_check<E>(
    env: &E,
    learned_policy: &[usize],
    oracle: &OracleSolution,
    episodes: usize,
    tolerance: f64,
    seed: u64,
) -> Result<EquivalenceReport, OracleError>
where
    E: Environment + Clone + Sync,
{
    let model = env.tabular_model().ok_or(OracleError::NotTabular)?;
    let max_steps = env.turn_limit().min(100_000);
    let learned_value = monte_carlo_value(env, learned_policy, oracle.gamma, episodes, max_steps, seed);
    let reachable = model.reachable_states(&oracle.optimal_policy);
    let agree = reachable.iter().filter(|&&s| learned_policy[s] == oracle.optimal_policy[s]).count();
    let agreement = if reachable.is_empty() { 1.0 } else { agree as f64 / reachable.len() as f64 };
    let value_gap = oracle.rho_star - learned_value.mean;
    let relative_gap = if oracle.rho_star != 0.0 { value_gap.abs() / oracle.rho_star.abs() } else { value_gap.abs() };
    Ok(EquivalenceReport {
        learned_value,
        rho_star: oracle.rho_star,
        value_gap,
        relative_gap,
        agreement,
        tolerance,
        flagged: relative_gap > tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::FrozenLake;

    /// s0 --a1--> goal (reward 1, terminal); a0 stays in s0 with reward 0.
    fn chain() -> TabularModel {
        TabularModel {
            start: 0,
            terminal: vec![false, true],
            transitions: vec![
                vec![
                    vec![Transition { probability: 1.0, next: 0, reward: 0.0 }],
                    vec![Transition { probability: 1.0, next: 1, reward: 1.0 }],
                ],
                vec![vec![Transition { probability: 1.0, next: 1, reward: 0.0 }]; 2],
            ],
        }
    }

    #[test]
    fn chain_values() {
        let sol = value_iteration(&chain(), 1.0, 1e-12).unwrap();
        assert_eq!(sol.rho_star, 1.0);
        // undiscounted, looping forever ties with finishing
        let sol = value_iteration(&chain(), 0.9, 1e-12).unwrap();
        assert_eq!(sol.optimal_policy[0], 1);
        let sol = value_iteration(&chain(), 0.0, 1e-12).unwrap();
        assert_eq!(sol.optimal_values, vec![1.0, 0.0]);
    }

    #[test]
    fn frozen_lake_fixed_point() {
        let model = FrozenLake::standard(true).tabular_model().unwrap();
        let sol = value_iteration(&model, 0.99, 1e-12).unwrap();
        assert!(sol.residual <= 1e-10);
        // classic value for the slippery 4x4 lake at gamma 0.99
        assert!((sol.rho_star - 0.542).abs() < 1e-3, "{}", sol.rho_star);
        let again = model.bellman(&sol.optimal_values, 0.99);
        let delta = again.iter().zip(&sol.optimal_values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(delta <= 1e-10);
        let evaluated = model.evaluate_policy(&sol.optimal_policy, 0.99, 1e-13);
        assert!((evaluated[0] - sol.rho_star).abs() < 1e-9);
    }

    #[test]
    fn non_tabular_is_rejected() {
        let env = crate::env::CartPole::episodic();
        assert!(matches!(solve_environment(&env, 0.99, 1e-9), Err(OracleError::NotTabular)));
    }

    #[test]
    fn constant_sampler_rises_without_overshoot() {
        let c = 0.8;
        let report = verify_threshold_dynamics(
            |_: &mut ChaCha8Rng| c,
            DynamicsSpec {
                rho_star: c,
                rho0: 0.0,
                beta: 0.1,
                num_updates: 30,
                num_trials: 4,
                confidence: 0.99,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(report.case, DynamicsCase::Below);
        assert!(report.passed(), "{:?}", report.verdicts);
        for w in report.trajectory.windows(2) {
            assert!(w[1].mean_rho > w[0].mean_rho && w[1].mean_rho < c);
        }
    }

    #[test]
    fn degenerate_sampler_at_optimum_is_stationary() {
        let report = verify_threshold_dynamics(
            |_: &mut ChaCha8Rng| 0.5,
            DynamicsSpec {
                rho_star: 0.5,
                rho0: 0.5,
                beta: 0.1,
                num_updates: 10,
                num_trials: 3,
                confidence: 0.99,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(report.case, DynamicsCase::AtOptimum);
        assert!(report.passed());
    }

    #[test]
    fn oracle_policy_matches_itself() {
        let env = FrozenLake::standard(true);
        let sol = solve_environment(&env, 0.99, 1e-12).unwrap();
        let env = FrozenLake::standard(true).with_turn_limit(100_000);
        let report = policy_equivalence_check(&env, &sol.optimal_policy, &sol, 20_000, 0.1, 3).unwrap();
        assert_eq!(report.agreement, 1.0);
        assert!(report.value_gap.abs() < 4.0 * report.learned_value.std_error + 1e-3);
        assert!(!report.flagged);
    }

    #[test]
    fn random_policy_is_flagged() {
        let env = FrozenLake::standard(true);
        let sol = solve_environment(&env, 0.99, 1e-12).unwrap();
        let poor = vec![0usize; 16]; // always left
        let report = policy_equivalence_check(&env, &poor, &sol, 20_000, 0.1, 3).unwrap();
        assert!(report.flagged);
        assert!(report.agreement < 1.0);
    }

    #[test]
    fn report_csv_has_declared_columns() {
        let report = verify_threshold_dynamics(
            bernoulli_sampler(0.5),
            DynamicsSpec {
                rho_star: 0.5,
                rho0: 0.0,
                beta: 0.1,
                num_updates: 3,
                num_trials: 100,
                confidence: 0.99,
                seed: 2,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("update,mean_rho,ci_low,ci_high\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
