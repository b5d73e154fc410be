use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sibre::harness::{
    emit_plot_tree, preset, run_experiment, run_sweep, run_transfer, verify_theorem, ExperimentConfig, HarnessError,
    Sweep,
};
use sibre::shaper::BetaSchedule;

#[derive(Parser)]
#[command(name = "sibre", version, about = "Terminal-reward shaping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every arm and seed of an experiment.
    Run(Experiment),
    /// Repeat an experiment across learning rates or beta values.
    Sweep {
        #[command(flatten)]
        experiment: Experiment,
        /// Overrides the sweep axis of the config.
        #[arg(long, requires = "values")]
        axis: Option<Axis>,
        /// Comma-separated values for --axis.
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Vec<f64>,
    },
    /// Train on the source task, then resume on the target task.
    Transfer(Experiment),
    /// Check the threshold recursion against the FrozenLake oracle.
    VerifyTheorem {
        /// Meta-seeds; each runs all three regimes.
        #[arg(long, value_parser = parse_seeds, default_value = "0")]
        seeds: SeedList,
        #[arg(long, default_value = "runs/theorem")]
        out: PathBuf,
        /// Constant threshold step size.
        #[arg(long, default_value_t = 0.02)]
        beta: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        updates: usize,
    },
    /// Render SVG charts from the aggregate CSVs under a run directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    LearningRate,
    Beta,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

/// Accepts `0,1,2` or a half-open range `0..5`.
fn parse_seeds(s: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        return Ok(SeedList((a..b).collect()));
    }
    s.split(',').map(|x| x.trim().parse().map_err(|e| format!("{x:?}: {e}"))).collect::<Result<_, _>>().map(SeedList)
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "source")]
struct Source {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct Experiment {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<SeedList>,
    /// Output directory; defaults to the config's own.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full-scale frame budgets instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
}

impl Experiment {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), HarnessError> {
        let mut config = match (&self.source.config, &self.source.preset) {
            (Some(path), _) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => return Err(HarnessError::Config("one of --config or --preset is required".into())),
        };
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.0.clone();
        }
        if self.paper_scale {
            config = config.with_paper_scale();
        }
        config.validate()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&config.output));
        Ok((config, out))
    }
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run(exp) => {
            let (config, out) = exp.load()?;
            let outcome = run_experiment(&config, &out)?;
            println!("wrote {} (config {})", outcome.dir.display(), outcome.config_hash);
        }
        Command::Sweep { experiment, axis, values } => {
            let (mut config, out) = experiment.load()?;
            if let Some(axis) = axis {
                config.sweep = match axis {
                    Axis::LearningRate => Sweep::LearningRates { values },
                    Axis::Beta => {
                        Sweep::BetaValues { values: values.into_iter().map(BetaSchedule::constant).collect() }
                    }
                };
            }
            let outcome = run_sweep(&config, &out)?;
            println!("wrote {} ({} summary rows)", out.join("summary.csv").display(), outcome.summary.len());
        }
        Command::Transfer(exp) => {
            let (config, out) = exp.load()?;
            let outcome = run_transfer(&config, &out)?;
            let stage2: usize = outcome.stage2.values().map(Vec::len).sum();
            println!("wrote {} ({stage2} stage-2 runs)", out.display());
        }
        Command::VerifyTheorem { seeds, out, beta, trials, updates } => {
            let reports = verify_theorem(&out, &seeds.0, beta, trials, updates)?;
            let mut failed = Vec::new();
            for r in &reports {
                for v in &r.verdicts {
                    println!(
                        "case {} rho0={} {}: {}",
                        r.case as u8,
                        r.rho0,
                        v.claim,
                        if v.passed { "pass" } else { "fail" }
                    );
                    if !v.passed {
                        failed.push(format!("case {} {}", r.case as u8, v.claim));
                    }
                }
            }
            if !failed.is_empty() {
                return Err(HarnessError::VerificationFailed(failed.join("; ")));
            }
        }
        Command::Plot { out } => {
            for path in emit_plot_tree(&out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
