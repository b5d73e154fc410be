//! A2C with a Gaussian policy on continuous MountainCar.

use sibre::agents::train_a2c;
use sibre::env::MountainCar;
use sibre::harness::preset;

fn main() {
    let config = preset("mountaincar").expect("preset");
    let env = MountainCar::new();
    for shaped in [false, true] {
        let threshold = shaped.then(|| config.shaper.threshold().expect("valid shaper"));
        let run = train_a2c(&env, &config.agent, threshold, 0).expect("a2c run");
        let returns: Vec<String> = run.returns().iter().step_by(5).map(|g| format!("{g:.1}")).collect();
        println!("{:<8} every 5th episode: {}", if shaped { "shaped" } else { "baseline" }, returns.join(" "));
    }
}
