//! Deterministic 2-D block-manipulation world and task success predicates.

pub mod success;
pub mod task;
pub mod world;

pub use success::{predicate, success, SuccessTracker};
pub use task::{format_task_list, parse_task_list, ResetVariant, TaskId};
pub use world::{observe, reset, step, Block, EnvAction, EnvConfig, WorldState, ACT_DIM, BLUE, GREEN, OBS_DIM};
