//! Two-stage transfer: DoorKey 5x5, then DoorKey 8x8 resuming the networks
//! and, in the shaped arm, the threshold.

use sibre::agents::Budget;
use sibre::harness::{preset, run_transfer, Arm};

fn main() {
    let out = std::env::temp_dir().join("sibre_transfer_example");
    let mut config = preset("transfer_doorkey").expect("preset");
    config.seeds = vec![0, 1];
    config.agent.budget = Budget::Frames(30_000);
    config.transfer.as_mut().expect("transfer preset").target_budget = Budget::Frames(30_000);
    let result = run_transfer(&config, &out).expect("transfer");
    for arm in [Arm::Baseline, Arm::Sibre] {
        for (s1, s2) in result.stage1[&arm].iter().zip(&result.stage2[&arm]) {
            println!(
                "{:<8} seed {}: stage-1 final rho {:?}, stage-2 first rho {:?}, stage-2 frames {}..{}",
                arm.name(),
                s1.seed,
                s1.threshold.as_ref().map(|t| t.rho()),
                s2.curve.first().and_then(|p| p.rho),
                s1.frames,
                s2.frames
            );
        }
    }
    println!("outputs under {}", out.display());
}
