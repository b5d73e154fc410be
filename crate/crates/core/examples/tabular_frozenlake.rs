//! Tabular Q-learning on slippery FrozenLake with and without shaping,
//! compared against the value-iteration optimum.

use sibre::agents::{train_tabular_q, AgentConfig, Budget, DecayUnit, EpsilonSchedule, TrainedModel};
use sibre::env::FrozenLake;
use sibre::harness::frozen_lake_oracle;
use sibre::mdp::Environment;
use sibre::shaper::{BetaSchedule, ThresholdState};
use sibre::stats::mean;

fn main() {
    let oracle = frozen_lake_oracle().expect("tabular model");
    let model = FrozenLake::standard(true).tabular_model().expect("tabular model");
    let config = AgentConfig {
        learning_rate: 0.1,
        epsilon: EpsilonSchedule { start: 1.0, decay: 0.9, every: 100, floor: 0.01, unit: DecayUnit::Episodes },
        budget: Budget::Episodes(10_000),
        ..AgentConfig::default()
    };
    println!("optimal expected return {:.4}", oracle.rho_star);
    for shaped in [false, true] {
        let mut finals = Vec::new();
        let mut greedy = Vec::new();
        for seed in 0..5 {
            let threshold = shaped.then(|| ThresholdState::episodic(BetaSchedule::default_staircase()).expect("valid"));
            let run = train_tabular_q(&mut FrozenLake::standard(true), &config, threshold, seed).expect("tabular env");
            let r = run.returns();
            finals.push(mean(&r[r.len() - 1000..]));
            if let TrainedModel::QTable(q) = &run.model {
                greedy.push(model.finite_horizon_return(&q.greedy_policy(), 100));
            }
        }
        println!(
            "{:<8} last-1000 mean return {:.4}, greedy policy value {:.4}",
            if shaped { "shaped" } else { "baseline" },
            mean(&finals),
            mean(&greedy)
        );
    }
}
