//! DQN on continuing CartPole, where the threshold tracks the discounted
//! return of each 500-step window.

use sibre::agents::{train_dqn, Budget};
use sibre::env::CartPole;
use sibre::harness::preset;

fn main() {
    let mut config = preset("cartpole_cont").expect("preset");
    config.agent.budget = Budget::Frames(20_000);
    for shaped in [false, true] {
        let threshold = shaped.then(|| config.shaper.threshold().expect("valid shaper"));
        let run = train_dqn(&mut CartPole::continuing(), &config.agent, threshold, 0).expect("discrete env");
        println!("{}:", if shaped { "shaped" } else { "baseline" });
        for p in run.curve.iter().step_by(8) {
            let rho = p.rho.map(|r| format!("{r:8.3}")).unwrap_or_else(|| "       -".into());
            println!("  window {:>3}  frames {:>6}  return {:>7.2}  rho {rho}", p.index, p.steps, p.ret);
        }
    }
}
