//! Learning-rate sweep on FrozenLake through the harness, then SVG charts
//! rendered from the aggregate CSVs.

use sibre::agents::Budget;
use sibre::harness::{emit_plot_tree, preset, run_sweep, Sweep};

fn main() {
    let out = std::env::temp_dir().join("sibre_sweep_example");
    let mut config = preset("frozenlake").expect("preset");
    config.seeds = (0..5).collect();
    config.agent.budget = Budget::Episodes(3_000);
    config.sweep = Sweep::LearningRates { values: vec![0.3, 0.1, 0.03, 0.01, 0.003] };
    let sweep = run_sweep(&config, &out).expect("sweep");
    println!("{:<8} {:<9} {:>10} {:>10}", "alpha", "arm", "final", "overall");
    for row in &sweep.summary {
        println!("{:<8} {:<9} {:>10.4} {:>10.4}", row.value, row.arm.name(), row.final_mean, row.overall_mean);
    }
    for path in emit_plot_tree(&out).expect("plots") {
        println!("wrote {}", path.display());
    }
}
