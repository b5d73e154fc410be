//! Value iteration on FrozenLake, a Monte-Carlo cross-check, and the
//! threshold-dynamics verifier in all three regimes.

use sibre::env::FrozenLake;
use sibre::harness::frozen_lake_oracle;
use sibre::oracle::{bernoulli_sampler, monte_carlo_value, solve_environment, verify_threshold_dynamics, DynamicsSpec};

fn main() {
    let env = FrozenLake::standard(true).with_turn_limit(100_000);
    let sol = solve_environment(&env, 0.99, 1e-12).expect("tabular");
    println!("V*(s0) = {:.5} after {} sweeps, residual {:.1e}", sol.rho_star, sol.sweeps, sol.residual);
    println!("pi* = {:?}", sol.optimal_policy);
    let mc = monte_carlo_value(&env, &sol.optimal_policy, 0.99, 100_000, 100_000, 7);
    println!("Monte-Carlo {:.5} +/- {:.5}", mc.mean, mc.std_error);

    let rho_star = frozen_lake_oracle().expect("tabular").rho_star;
    println!("expected undiscounted return of pi* within 100 steps: {rho_star:.4}");
    for rho0 in [0.0, 1.0, rho_star] {
        let spec =
            DynamicsSpec { rho_star, rho0, beta: 0.02, num_updates: 50, num_trials: 10_000, confidence: 0.99, seed: 0 };
        let report = verify_threshold_dynamics(bernoulli_sampler(rho_star), spec).expect("valid spec");
        let last = report.trajectory.last().expect("nonempty");
        println!("case {:?}: E[rho_50] = {:.4} [{:.4}, {:.4}]", report.case, last.mean_rho, last.ci_low, last.ci_high);
        for v in &report.verdicts {
            println!("  {} -> {}", v.claim, if v.passed { "holds" } else { "violated" });
        }
    }
}
