//! Seeded experiment runner: presets, sweeps, transfer, aggregation and plots.

mod aggregate;
pub mod config;
mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use aggregate::{
    aggregate_curves, aggregate_files, read_curve_csv, summarize, Aggregate, AggregateRow, SeedCurve, SummaryRow,
};
pub use config::{preset, AgentKind, AnyEnv, Arm, EnvSpec, ExperimentConfig, ShaperSpec, Sweep, TransferSpec, PRESETS};
pub use plot::{emit_plot_tree, emit_plots, trailing_mean};

use crate::agents::{
    resume_a2c, train_a2c, train_dqn, train_tabular_q, transfer_checkpoint, AgentError, Budget, RunResult, TrainedModel,
};
use crate::env::FrozenLake;
use crate::mdp::Environment;
use crate::oracle::{
    bernoulli_sampler, solve_environment, verify_threshold_dynamics, DynamicsReport, DynamicsSpec, OracleSolution,
};
use crate::shaper::BetaSchedule;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "SIBRE_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("agent: {0}")]
    Agent(AgentError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl From<AgentError> for HarnessError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Checkpoint(m) => HarnessError::Checkpoint(m),
            other => HarnessError::Agent(other),
        }
    }
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::UnknownPreset(_) => "unknown_preset",
            HarnessError::InvalidSweep(_) => "invalid_sweep",
            HarnessError::Checkpoint(_) => "checkpoint",
            HarnessError::Agent(_) => "agent",
            HarnessError::Io(_) => "io",
            HarnessError::Csv(_) => "csv",
            HarnessError::MissingColumn(_) => "missing_column",
            HarnessError::Plot(_) => "plot",
            HarnessError::Oracle(_) => "oracle",
            HarnessError::VerificationFailed(_) => "verification_failed",
        }
    }
}

/// Worker count from the environment, defaulting to the available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))
}

/// Trains one seed of one arm.
pub fn run_single(config: &ExperimentConfig, arm: Arm, seed: u64) -> Result<RunResult, HarnessError> {
    let threshold = match arm {
        Arm::Baseline => None,
        Arm::Sibre => Some(config.shaper.threshold()?),
    };
    let mut env = config.environment.build()?;
    Ok(match config.agent_kind {
        config::AgentKind::TabularQ => train_tabular_q(&mut env, &config.agent, threshold, seed)?,
        config::AgentKind::Dqn => train_dqn(&mut env, &config.agent, threshold, seed)?,
        config::AgentKind::A2c => train_a2c(&env, &config.agent, threshold, seed)?,
    })
}

fn seed_path(dir: &Path, arm: Arm, seed: u64) -> PathBuf {
    dir.join(arm.name()).join(format!("seed_{seed}.csv"))
}

fn write_run(path: &Path, run: &RunResult) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path)?;
    run.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

/// Everything produced by [`run_experiment`].
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub config_hash: String,
    pub runs: BTreeMap<Arm, Vec<RunResult>>,
    pub aggregates: BTreeMap<Arm, Aggregate>,
    /// Seconds per (arm, seed); kept out of the CSV files.
    pub wall_clock: BTreeMap<(Arm, u64), f64>,
}

fn write_meta(dir: &Path, hash: &str, wall_clock: &BTreeMap<(Arm, u64), f64>) -> Result<(), HarnessError> {
    let mut text = format!("config_hash = \"{hash}\"\n\n[wall_clock_seconds]\n");
    for ((arm, seed), secs) in wall_clock {
        text.push_str(&format!("{}_{seed} = {secs:.3}\n", arm.name()));
    }
    fs::write(dir.join("meta.toml"), text)?;
    Ok(())
}

/// Runs every (arm, seed) pair of `config` on the worker pool, writes one CSV
/// per pair under `out/<arm>/`, then merges them into `out/<arm>/aggregate.csv`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), config.to_toml()?)?;
    let hash = config.hash()?;
    let jobs: Vec<(Arm, u64)> = config.arms.iter().flat_map(|&a| config.seeds.iter().map(move |&s| (a, s))).collect();
    let finished: Vec<Result<(Arm, u64, RunResult, f64), HarnessError>> = pool()?.install(|| {
        jobs.par_iter()
            .map(|&(arm, seed)| {
                let start = Instant::now();
                let run = run_single(config, arm, seed)?;
                write_run(&seed_path(out, arm, seed), &run)?;
                Ok((arm, seed, run, start.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut runs: BTreeMap<Arm, Vec<RunResult>> = BTreeMap::new();
    let mut wall_clock = BTreeMap::new();
    for item in finished {
        let (arm, seed, run, secs) = item?;
        runs.entry(arm).or_default().push(run);
        wall_clock.insert((arm, seed), secs);
    }
    let mut aggregates = BTreeMap::new();
    for &arm in &config.arms {
        let paths: Vec<PathBuf> = config.seeds.iter().map(|&s| seed_path(out, arm, s)).collect();
        let agg = aggregate_files(&paths, frame_bins(config.agent.budget))?;
        agg.write_csv(&out.join(arm.name()).join("aggregate.csv"))?;
        aggregates.insert(arm, agg);
    }
    write_meta(out, &hash, &wall_clock)?;
    Ok(ExperimentOutcome { dir: out.to_path_buf(), config_hash: hash, runs, aggregates, wall_clock })
}

/// Frame-budget runs are aggregated on a frame axis of 100 bins; episode
/// budgets align on the episode or window index.
fn frame_bins(budget: Budget) -> Option<u64> {
    match budget {
        Budget::Frames(n) => Some((n / 100).max(1)),
        Budget::Episodes(_) => None,
    }
}

fn beta_label(b: &BetaSchedule) -> String {
    match b {
        BetaSchedule::Constant { value } => format!("constant_{value}"),
        BetaSchedule::LinearStaircase { start, end, stages } => format!("staircase_{start}_{end}_{stages}"),
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub values: Vec<String>,
    pub experiments: Vec<ExperimentOutcome>,
    pub summary: Vec<SummaryRow>,
}

/// Runs one experiment per value of the configured sweep axis and writes
/// `out/summary.csv` with one row per (value, arm).
pub fn run_sweep(config: &ExperimentConfig, out: &Path) -> Result<SweepOutcome, HarnessError> {
    let variants: Vec<(String, ExperimentConfig)> = match &config.sweep {
        Sweep::None => return Err(HarnessError::InvalidSweep("no sweep axis configured".into())),
        Sweep::LearningRates { values } => values
            .iter()
            .map(|&v| {
                let mut c = config.clone();
                c.agent.learning_rate = v;
                (v.to_string(), c)
            })
            .collect(),
        Sweep::BetaValues { values } => values
            .iter()
            .map(|v| {
                let mut c = config.clone();
                c.shaper.beta = *v;
                (beta_label(v), c)
            })
            .collect(),
    };
    if variants.is_empty() {
        return Err(HarnessError::InvalidSweep("empty value list".into()));
    }
    let axis = match config.sweep {
        Sweep::LearningRates { .. } => "learning_rate",
        _ => "beta",
    };
    let mut experiments = Vec::new();
    let mut summary = Vec::new();
    for (label, mut variant) in variants {
        variant.sweep = Sweep::None;
        let outcome = run_experiment(&variant, &out.join(format!("{axis}_{label}")))?;
        for (&arm, runs) in &outcome.runs {
            summary.push(summarize(&label, arm, runs));
        }
        experiments.push(outcome);
    }
    aggregate::write_summary(&out.join("summary.csv"), &summary)?;
    Ok(SweepOutcome { values: summary.iter().map(|r| r.value.clone()).collect(), experiments, summary })
}

#[derive(Debug)]
pub struct TransferOutcome {
    pub stage1: BTreeMap<Arm, Vec<RunResult>>,
    /// Empty when the target budget is zero.
    pub stage2: BTreeMap<Arm, Vec<RunResult>>,
}

/// Trains on the source environment, checkpoints the networks and the
/// threshold, then resumes on the target environment.
pub fn run_transfer(config: &ExperimentConfig, out: &Path) -> Result<TransferOutcome, HarnessError> {
    config.validate()?;
    let spec = config.transfer.clone().ok_or_else(|| HarnessError::Config("transfer section missing".into()))?;
    let stage1 = run_experiment(config, &out.join("stage1"))?;
    let zero = matches!(spec.target_budget, Budget::Frames(0) | Budget::Episodes(0));
    let mut stage2 = BTreeMap::new();
    if zero {
        return Ok(TransferOutcome { stage1: stage1.runs, stage2 });
    }
    let target = spec.target.build()?;
    let mut stage2_config = config.clone();
    stage2_config.environment = spec.target.clone();
    stage2_config.agent.budget = spec.target_budget;
    stage2_config.transfer = None;
    let dir = out.join("stage2");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), stage2_config.to_toml()?)?;

    let mut jobs = Vec::new();
    for (&arm, runs) in &stage1.runs {
        for run in runs {
            let checkpoint = transfer_checkpoint(run, &target)?;
            save_checkpoint(&out.join("checkpoints").join(arm.name()), run)?;
            jobs.push((arm, run.seed, checkpoint));
        }
    }
    let finished: Vec<Result<(Arm, RunResult), HarnessError>> = pool()?.install(|| {
        jobs.into_par_iter()
            .map(|(arm, seed, checkpoint)| {
                let run = resume_a2c(&target, &stage2_config.agent, checkpoint, seed)?;
                write_run(&seed_path(&dir, arm, seed), &run)?;
                Ok((arm, run))
            })
            .collect()
    });
    for item in finished {
        let (arm, run) = item?;
        stage2.entry(arm).or_insert_with(Vec::new).push(run);
    }
    for &arm in &config.arms {
        let paths: Vec<PathBuf> = config.seeds.iter().map(|&s| seed_path(&dir, arm, s)).collect();
        aggregate_files(&paths, frame_bins(spec.target_budget))?
            .write_csv(&dir.join(arm.name()).join("aggregate.csv"))?;
    }
    Ok(TransferOutcome { stage1: stage1.runs, stage2 })
}

fn save_checkpoint(dir: &Path, run: &RunResult) -> Result<(), HarnessError> {
    let TrainedModel::ActorCritic(model) = &run.model else {
        return Err(HarnessError::Checkpoint("only actor-critic runs are checkpointed".into()));
    };
    fs::create_dir_all(dir)?;
    let net_err = |e: crate::nn::NetError| HarnessError::Csv(e.to_string());
    model
        .actor
        .write_params_csv(fs::File::create(dir.join(format!("seed_{}_actor.csv", run.seed)))?)
        .map_err(net_err)?;
    model
        .critic
        .write_params_csv(fs::File::create(dir.join(format!("seed_{}_critic.csv", run.seed)))?)
        .map_err(net_err)?;
    if let Some(t) = &run.threshold {
        fs::write(
            dir.join(format!("seed_{}_threshold.toml", run.seed)),
            format!("rho = {}\nupdates = {}\n", t.rho(), t.updates()),
        )?;
    }
    Ok(())
}

/// Oracle for slippery FrozenLake at `gamma = 0.99`, with `rho_star`
/// replaced by the undiscounted expected return of `pi*` over the turn
/// limit, the quantity a learning curve of raw returns estimates.
pub fn frozen_lake_oracle() -> Result<OracleSolution, HarnessError> {
    let env = FrozenLake::standard(true);
    let mut solution = solve_environment(&env, 0.99, 1e-12).map_err(|e| HarnessError::Oracle(e.to_string()))?;
    let model = env.tabular_model().ok_or_else(|| HarnessError::Oracle("no model".into()))?;
    solution.rho_star = model.finite_horizon_return(&solution.optimal_policy, env.turn_limit());
    Ok(solution)
}

/// Threshold dynamics under returns drawn from the optimal FrozenLake policy,
/// one report per regime (start below, above and on `rho*`) and meta-seed.
/// Writes `dynamics_seed<s>_case<c>.csv` under `out`.
pub fn verify_theorem(
    out: &Path,
    seeds: &[u64],
    beta: f64,
    trials: usize,
    updates: usize,
) -> Result<Vec<DynamicsReport>, HarnessError> {
    let rho_star = frozen_lake_oracle()?.rho_star;
    fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    for &seed in seeds {
        for rho0 in [0.0, 1.0, rho_star] {
            let spec =
                DynamicsSpec { rho_star, rho0, beta, num_updates: updates, num_trials: trials, confidence: 0.99, seed };
            let report = pool()?
                .install(|| verify_threshold_dynamics(bernoulli_sampler(rho_star), spec))
                .map_err(|e| HarnessError::Oracle(e.to_string()))?;
            let path = out.join(format!("dynamics_seed{seed}_case{}.csv", report.case as u8));
            report.write_csv(fs::File::create(path)?).map_err(|e| HarnessError::Oracle(e.to_string()))?;
            reports.push(report);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_lake() -> ExperimentConfig {
        let mut c = preset("frozenlake").unwrap();
        c.seeds = vec![0, 1, 2];
        c.agent.budget = Budget::Episodes(300);
        c
    }

    #[test]
    fn experiment_writes_curves_aggregates_and_plot() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment(&tiny_lake(), dir.path()).unwrap();
        for arm in ["baseline", "sibre"] {
            for s in 0..3 {
                assert!(dir.path().join(arm).join(format!("seed_{s}.csv")).exists());
            }
        }
        let agg = Aggregate::read_csv(&dir.path().join("sibre").join("aggregate.csv")).unwrap();
        assert_eq!(agg.rows.len(), 300);
        assert!(agg.rows.iter().all(|r| r.seeds == 3 && r.rho_mean.is_some()));
        assert_eq!(outcome.aggregates[&Arm::Sibre], agg);
        let svg = fs::read_to_string(emit_plots(dir.path()).unwrap()).unwrap();
        assert!(svg.contains("baseline") && svg.contains("sibre threshold") && svg.contains("trailing mean"));
        let meta = fs::read_to_string(dir.path().join("meta.toml")).unwrap();
        assert!(meta.contains(&outcome.config_hash));
    }

    #[test]
    fn sweep_requires_an_axis() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(run_sweep(&tiny_lake(), dir.path()), Err(HarnessError::InvalidSweep(_))));
        let mut c = tiny_lake();
        c.sweep = Sweep::LearningRates { values: vec![] };
        assert!(matches!(run_sweep(&c, dir.path()), Err(HarnessError::InvalidSweep(_))));
    }

    #[test]
    fn sweep_writes_one_summary_row_per_value_and_arm() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny_lake();
        c.agent.budget = Budget::Episodes(50);
        c.sweep = Sweep::BetaValues { values: vec![BetaSchedule::constant(0.01), BetaSchedule::constant(0.2)] };
        let out = run_sweep(&c, dir.path()).unwrap();
        assert_eq!(out.summary.len(), 4);
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(dir.path().join("beta_constant_0.2").join("sibre").join("aggregate.csv").exists());
    }

    #[test]
    fn dynamics_check_writes_one_csv_per_case() {
        let dir = tempfile::tempdir().unwrap();
        let reports = verify_theorem(dir.path(), &[3], 0.02, 2_000, 20).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.passed()), "{reports:?}");
        for c in 1..=3 {
            assert!(dir.path().join(format!("dynamics_seed3_case{c}.csv")).exists());
        }
    }

    #[test]
    fn worker_count_reads_environment() {
        assert!(worker_count() >= 1);
    }
}
