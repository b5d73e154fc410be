//! Concrete environments.

mod classic;
mod frozen_lake;
mod gridworld;

pub use classic::{
    CartPole, CartPoleState, MountainCar, MountainCarState, ANGLE_LIMIT, FORCE_MAG, MC_GOAL_POSITION, MC_MAX_SPEED,
    POSITION_LIMIT, TAU,
};
pub use frozen_lake::{FrozenLake, LakeCell, DOWN, LEFT, RIGHT, STANDARD_MAP, UP};
pub use gridworld::{
    observation_len, Cell, GridAction, GridState, GridWorld, Heading, LayoutSource, DEFAULT_TURN_LIMIT,
    DOORKEY_ENCODE_SIZE, GOAL_REWARD, STEP_REWARD,
};
