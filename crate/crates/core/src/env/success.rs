use crate::env::task::TaskId;
use crate::env::world::{EnvConfig, WorldState, BLUE, GREEN};
use crate::error::{Error, Result};

fn norm(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Instantaneous task predicate on a single state.
pub fn predicate(cfg: &EnvConfig, task: TaskId, s: &WorldState) -> bool {
    let blue = &s.blocks[BLUE];
    match task {
        TaskId::OpenGripper => s.last_grip > 0.0,
        TaskId::CloseGripper => s.last_grip < 0.0,
        TaskId::Reach => norm(s.gripper, blue.pos) < cfg.reach_tol,
        TaskId::Lift => blue.held && blue.pos[1] > cfg.lift_height,
        TaskId::MoveObject => {
            let speed = (blue.vel[0].powi(2) + blue.vel[1].powi(2)).sqrt();
            speed > cfg.move_min_speed && blue.accel < cfg.move_max_accel
        }
        TaskId::Bring => {
            s.on_tray(cfg, BLUE) && norm(blue.pos, cfg.slot_target(BLUE)) < cfg.bring_tol
        }
        TaskId::Insert => {
            s.on_tray(cfg, BLUE) && norm(blue.pos, cfg.slot_target(BLUE)) < cfg.insert_tol
        }
        TaskId::Stack | TaskId::UnstackStack => {
            s.stacked_on(cfg, BLUE, GREEN) && s.is_resting(cfg, BLUE)
        }
    }
}

/// Success over a window of recent states: the predicate holds on each of
/// the last `task.hold_steps()` states.
pub fn success(cfg: &EnvConfig, task: TaskId, window: &[WorldState]) -> Result<bool> {
    let need = task.hold_steps();
    if window.len() < need {
        return Err(Error::InsufficientHistory {
            task,
            required: need,
            got: window.len(),
        });
    }
    Ok(window[window.len() - need..]
        .iter()
        .all(|s| predicate(cfg, task, s)))
}

/// Streaming form of [`success`]: counts consecutive predicate hits.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuccessTracker {
    run: usize,
}

impl SuccessTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the newest state; returns whether the hold requirement is met.
    pub fn observe(&mut self, cfg: &EnvConfig, task: TaskId, s: &WorldState) -> bool {
        if predicate(cfg, task, s) {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= task.hold_steps()
    }

    pub fn run_length(&self) -> usize {
        self.run
    }

    pub fn reset(&mut self) {
        self.run = 0;
    }
}
