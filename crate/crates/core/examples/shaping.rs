//! Feeds two hand-written episodes through the shaper and prints what the
//! learner would see.

use sibre::mdp::{Observation, StepOutcome};
use sibre::shaper::{BetaSchedule, Shaper, ThresholdState};

fn main() {
    let threshold = ThresholdState::episodic(BetaSchedule::constant(0.5)).expect("valid schedule");
    let mut shaper = Shaper::new(threshold);
    let episodes = [vec![-0.1, -0.1, 4.0], vec![-0.1, -0.1, -0.1, -0.1]];
    for (e, rewards) in episodes.iter().enumerate() {
        for (t, &reward) in rewards.iter().enumerate() {
            let last = t + 1 == rewards.len();
            let outcome = StepOutcome {
                reward,
                next_observation: Observation::vector(vec![]),
                terminal: last && e == 0,
                truncated: last && e == 1,
            };
            let step = shaper.shape(&outcome, 0.0);
            println!(
                "episode {e} step {t}: reward {reward:+.2} -> shaped {:+.2} (rho {:.3})",
                step.reward.value, step.rho_used
            );
        }
        println!("threshold after episode {e}: {:.3}", shaper.threshold().rho());
    }
}
