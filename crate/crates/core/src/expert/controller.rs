use crate::env::{EnvAction, EnvConfig, TaskId, WorldState, BLUE, GREEN};

/// Height (block centre) at which held blocks are carried.
pub const CARRY_HEIGHT: f64 = 0.35;
const GRASP_TOL: f64 = 0.01;
const ALIGN_TOL: f64 = 0.002;
const MOVE_SPEED: f64 = 0.6;
const APPROACH_GAIN: f64 = 0.5;

const OPEN: f64 = 1.0;
const CLOSE: f64 = -1.0;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Per-axis proportional command: saturated far away, then closing a fixed
/// fraction of the remaining gap each step.
fn toward(cfg: &EnvConfig, from: [f64; 2], target: [f64; 2]) -> (f64, f64) {
    let c = |d: f64| (APPROACH_GAIN * d / cfg.max_step).clamp(-1.0, 1.0);
    (c(target[0] - from[0]), c(target[1] - from[1]))
}

fn act(d: (f64, f64), grip: f64) -> EnvAction {
    EnvAction::new(d.0, d.1, grip)
}

fn retreat(cfg: &EnvConfig, s: &WorldState) -> EnvAction {
    act(toward(cfg, s.gripper, [s.gripper[0], CARRY_HEIGHT]), OPEN)
}

/// Approach a block with the gripper open and close on it.
fn grasp(cfg: &EnvConfig, s: &WorldState, block: usize) -> EnvAction {
    let target = s.blocks[block].pos;
    let d = toward(cfg, s.gripper, target);
    if dist(s.gripper, target) < GRASP_TOL {
        if s.aperture > 0.5 {
            act(d, CLOSE)
        } else {
            // closed on nothing: reopen first
            act((0.0, 0.0), OPEN)
        }
    } else {
        act(d, OPEN)
    }
}

/// Carry the held block over `target_x`, lower it and let go.
fn place_held(cfg: &EnvConfig, s: &WorldState, block: usize, target_x: f64) -> EnvAction {
    let b = &s.blocks[block];
    let [ox, oy] = s.grasp_offset;
    let grip_target = |x: f64, y: f64| [x - ox, y - oy];
    if (b.pos[0] - target_x).abs() > ALIGN_TOL {
        if b.pos[1] < CARRY_HEIGHT - 0.01 {
            let d = toward(cfg, s.gripper, grip_target(b.pos[0], CARRY_HEIGHT));
            return act((0.0, d.1), CLOSE);
        }
        return act(toward(cfg, s.gripper, grip_target(target_x, CARRY_HEIGHT)), CLOSE);
    }
    let low = b.pos[1] <= cfg.floor_rest() + 0.011;
    let blocked = b.vel[1] > -1e-9 && b.pos[1] < CARRY_HEIGHT - 0.05;
    if low || blocked {
        return act((0.0, 0.0), OPEN);
    }
    let (dx, _) = toward(cfg, s.gripper, grip_target(target_x, b.pos[1]));
    act((dx, -1.0), CLOSE)
}

/// Where to put the green block when it is in the way: well clear of the
/// blue block and the blue zone, as close to the tray centre as possible.
fn aside_x(cfg: &EnvConfig, s: &WorldState) -> f64 {
    let bx = s.blocks[BLUE].pos[0];
    let lim = cfg.block_x_limit() - 0.05;
    [0.35, -0.35, 0.6, -0.6, 0.85, -0.85]
        .iter()
        .map(|o| bx + o)
        .filter(|x| x.abs() <= lim && (x - cfg.blue_zone_x).abs() >= 0.2)
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(-lim * cfg.blue_zone_x.signum())
}

fn green_obstructs(cfg: &EnvConfig, s: &WorldState, task: TaskId) -> bool {
    if s.stacked_on(cfg, GREEN, BLUE) {
        return true;
    }
    match task {
        TaskId::Bring | TaskId::Insert => {
            (s.blocks[GREEN].pos[0] - cfg.blue_zone_x).abs() < cfg.block_size + 0.01
        }
        _ => false,
    }
}

fn done(cfg: &EnvConfig, s: &WorldState, task: TaskId) -> bool {
    let target = cfg.slot_target(BLUE);
    match task {
        TaskId::Bring => {
            s.on_tray(cfg, BLUE) && dist(s.blocks[BLUE].pos, target) < cfg.bring_tol / 2.0
        }
        TaskId::Insert => {
            s.on_tray(cfg, BLUE) && dist(s.blocks[BLUE].pos, target) < cfg.insert_tol / 2.0
        }
        TaskId::Stack | TaskId::UnstackStack => {
            s.stacked_on(cfg, BLUE, GREEN) && s.is_resting(cfg, BLUE)
        }
        _ => false,
    }
}

/// Horizontal direction for the move expert: keep going the current way,
/// turn back near the walls, start toward the tray centre.
fn move_direction(cfg: &EnvConfig, s: &WorldState) -> f64 {
    let b = &s.blocks[BLUE];
    let edge = cfg.block_x_limit() - 0.1;
    if b.vel[0].abs() > 1e-6 {
        let dir = b.vel[0].signum();
        if b.pos[0] * dir > edge {
            -dir
        } else {
            dir
        }
    } else if b.pos[0] > 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Deterministic scripted action for `task` in state `s`.
pub fn expert_action(cfg: &EnvConfig, task: TaskId, s: &WorldState) -> EnvAction {
    match task {
        TaskId::OpenGripper => return act((0.0, 0.0), OPEN),
        TaskId::CloseGripper => return act((0.0, 0.0), CLOSE),
        TaskId::Reach => return act(toward(cfg, s.gripper, s.blocks[BLUE].pos), OPEN),
        _ => {}
    }
    if done(cfg, s, task) {
        return retreat(cfg, s);
    }
    match s.held_block() {
        Some(GREEN) => return place_held(cfg, s, GREEN, aside_x(cfg, s)),
        None if green_obstructs(cfg, s, task) => return grasp(cfg, s, GREEN),
        None => return grasp(cfg, s, BLUE),
        Some(_) => {}
    }
    let b = &s.blocks[BLUE];
    let [ox, oy] = s.grasp_offset;
    match task {
        TaskId::Lift => act(
            toward(cfg, s.gripper, [b.pos[0] - ox, CARRY_HEIGHT - oy]),
            CLOSE,
        ),
        TaskId::MoveObject => {
            let (_, dy) = toward(cfg, s.gripper, [s.gripper[0], CARRY_HEIGHT - oy]);
            if b.pos[1] < CARRY_HEIGHT - 0.1 {
                act((0.0, dy), CLOSE)
            } else {
                act((MOVE_SPEED * move_direction(cfg, s), dy), CLOSE)
            }
        }
        TaskId::Bring | TaskId::Insert => place_held(cfg, s, BLUE, cfg.blue_zone_x),
        TaskId::Stack | TaskId::UnstackStack => {
            place_held(cfg, s, BLUE, s.blocks[GREEN].pos[0])
        }
        TaskId::OpenGripper | TaskId::CloseGripper | TaskId::Reach => unreachable!(),
    }
}
