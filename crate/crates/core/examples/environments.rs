//! Rolls a uniform random policy through every environment and prints the
//! mean return over a few episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sibre::env::{CartPole, FrozenLake, GridWorld, MountainCar};
use sibre::mdp::{run_episode, Action, ActionSpec, Environment, Observation};

fn random_returns<E: Environment>(name: &str, mut env: E) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = env.action_spec();
    let mut policy = |_: &Observation| match &spec {
        ActionSpec::Discrete { count } => Action::Discrete(rng.gen_range(0..*count)),
        ActionSpec::Continuous { low, high } => {
            Action::Continuous(low.iter().zip(high).map(|(l, h)| rng.gen_range(*l..=*h)).collect())
        }
    };
    let limit = env.turn_limit().min(2_000);
    let traces: Vec<_> =
        (0..20).map(|s| run_episode(&mut env, &mut policy, limit, s).expect("valid actions")).collect();
    let mean: f64 = traces.iter().map(|t| t.rewards().iter().sum::<f64>()).sum::<f64>() / traces.len() as f64;
    let steps: usize = traces.iter().map(|t| t.len()).sum::<usize>() / traces.len();
    println!("{name:<22} obs {:>4}  mean return {mean:>9.3}  mean length {steps}", env.observation_dim());
}

fn main() {
    random_returns("frozenlake (slippery)", FrozenLake::standard(true));
    random_returns("doorkey 6x6", GridWorld::door_key(6));
    random_returns("two rooms 7x7", GridWorld::two_rooms(7));
    random_returns("cartpole", CartPole::episodic());
    random_returns("cartpole continuing", CartPole::continuing().with_turn_limit(500));
    random_returns("mountaincar", MountainCar::new());
    println!("\n{}", GridWorld::door_key(6).state().dump());
}
