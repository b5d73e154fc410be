//! A2C with 16 parallel copies of DoorKey 5x5, baseline against shaped.

use sibre::agents::{train_a2c, Budget};
use sibre::env::GridWorld;
use sibre::harness::preset;
use sibre::stats::mean;

fn main() {
    let mut config = preset("doorkey6").expect("preset");
    config.agent.budget = Budget::Frames(60_000);
    let env = GridWorld::door_key(5).with_turn_limit(250);
    for shaped in [false, true] {
        let threshold = shaped.then(|| config.shaper.threshold().expect("valid shaper"));
        let run = train_a2c(&env, &config.agent, threshold, 1).expect("a2c run");
        let r = run.returns();
        let tail = &r[r.len() - r.len() / 10..];
        println!(
            "{:<8} episodes {:>5}  first-10% mean {:>7.3}  last-10% mean {:>7.3}  final rho {:?}",
            if shaped { "shaped" } else { "baseline" },
            r.len(),
            mean(&r[..r.len() / 10]),
            mean(tail),
            run.threshold.map(|t| t.rho())
        );
    }
}
