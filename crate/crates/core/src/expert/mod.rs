//! Scripted experts and demonstration collection.

mod collect;
mod controller;

pub use collect::{
    collect_gripper_mixed, collect_play_based, collect_reset_based, run_expert, CollectReport,
    EpisodeTrace, CLOSE_PREFIX, OPEN_PREFIX,
};
pub use controller::{expert_action, CARRY_HEIGHT};
