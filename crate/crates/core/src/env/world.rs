//! Kinematic 2-D tray: `x` runs along the tray, `y` is height.
//!
//! Block positions are block centres. A block resting on the floor sits at
//! `y = block_size / 2`; one dropped into a slot sits `slot_depth` lower.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::task::ResetVariant;

pub const OBS_DIM: usize = 25;
pub const ACT_DIM: usize = 3;

pub const BLUE: usize = 0;
pub const GREEN: usize = 1;

/// Geometry and success thresholds, all in tray units.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub episode_len: usize,
    pub max_step: f64,
    pub grasp_radius: f64,
    pub block_size: f64,
    pub fall_speed: f64,
    pub tray_half_width: f64,
    pub ceiling: f64,
    pub gripper_reset_low: f64,
    pub gripper_reset_high: f64,
    pub blue_zone_x: f64,
    pub green_zone_x: f64,
    pub slot_depth: f64,
    pub slot_clearance: f64,
    pub bring_tol: f64,
    pub insert_tol: f64,
    pub reach_tol: f64,
    pub lift_height: f64,
    pub move_min_speed: f64,
    pub move_max_accel: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_len: 360,
            max_step: 0.05,
            grasp_radius: 0.06,
            block_size: 0.1,
            fall_speed: 0.05,
            tray_half_width: 1.0,
            ceiling: 0.6,
            gripper_reset_low: 0.2,
            gripper_reset_high: 0.6,
            blue_zone_x: 0.5,
            green_zone_x: -0.5,
            slot_depth: 0.02,
            slot_clearance: 0.01,
            bring_tol: 0.08,
            insert_tol: 0.012,
            reach_tol: 0.015,
            lift_height: 0.15,
            move_min_speed: 0.01,
            move_max_accel: 0.02,
        }
    }
}

impl EnvConfig {
    pub fn floor_rest(&self) -> f64 {
        self.block_size / 2.0
    }

    pub fn slot_rest(&self) -> f64 {
        self.floor_rest() - self.slot_depth
    }

    /// Insertion target of a block's zone.
    pub fn slot_target(&self, block: usize) -> [f64; 2] {
        let x = if block == BLUE {
            self.blue_zone_x
        } else {
            self.green_zone_x
        };
        [x, self.slot_rest()]
    }

    pub fn block_x_limit(&self) -> f64 {
        self.tray_half_width - self.block_size / 2.0
    }

    fn over_slot(&self, x: f64) -> bool {
        (x - self.blue_zone_x).abs() <= self.slot_clearance
            || (x - self.green_zone_x).abs() <= self.slot_clearance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    /// Magnitude of the last step-to-step velocity change.
    pub accel: f64,
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub gripper: [f64; 2],
    pub gripper_vel: [f64; 2],
    /// 1 open, 0 closed.
    pub aperture: f64,
    /// Apertures one and two steps back.
    pub aperture_history: [f64; 2],
    pub blocks: [Block; 2],
    /// Held block position minus gripper position, constant while held.
    pub grasp_offset: [f64; 2],
    /// Grip channel of the last applied action (0 after reset).
    pub last_grip: f64,
    pub t: usize,
}

/// `(dx, dy, grip)`, each clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvAction {
    pub dx: f64,
    pub dy: f64,
    pub grip: f64,
}

impl EnvAction {
    pub fn new(dx: f64, dy: f64, grip: f64) -> Self {
        let c = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self {
            dx: c(dx),
            dy: c(dy),
            grip: c(grip),
        }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; ACT_DIM] {
        [self.dx, self.dy, self.grip]
    }
}

impl WorldState {
    pub fn held_block(&self) -> Option<usize> {
        self.blocks.iter().position(|b| b.held)
    }

    /// Height a free block at horizontal position `x` would come to rest at.
    pub fn support_height(&self, cfg: &EnvConfig, block: usize, x: f64) -> f64 {
        let mut h = if cfg.over_slot(x) {
            cfg.slot_rest()
        } else {
            cfg.floor_rest()
        };
        let me = &self.blocks[block];
        let other = &self.blocks[1 - block];
        if !other.held
            && (x - other.pos[0]).abs() < cfg.block_size / 2.0
            && other.pos[1] + cfg.block_size <= me.pos[1] + 1e-9
        {
            h = h.max(other.pos[1] + cfg.block_size);
        }
        h
    }

    /// Highest surface under horizontal position `x`, ignoring heights.
    fn obstacle_top(&self, cfg: &EnvConfig, block: usize, x: f64) -> f64 {
        let other = &self.blocks[1 - block];
        let base = if cfg.over_slot(x) {
            cfg.slot_rest()
        } else {
            cfg.floor_rest()
        };
        if !other.held && (x - other.pos[0]).abs() < cfg.block_size {
            base.max(other.pos[1] + cfg.block_size)
        } else {
            base
        }
    }

    /// Free and sitting at its support height.
    pub fn is_resting(&self, cfg: &EnvConfig, block: usize) -> bool {
        let b = &self.blocks[block];
        !b.held && (b.pos[1] - self.support_height(cfg, block, b.pos[0])).abs() < 1e-9
    }

    /// Resting on the tray (floor or slot), not on the other block.
    pub fn on_tray(&self, cfg: &EnvConfig, block: usize) -> bool {
        let b = &self.blocks[block];
        self.is_resting(cfg, block) && b.pos[1] <= cfg.floor_rest() + 1e-9
    }

    /// `upper` rests on `lower`.
    pub fn stacked_on(&self, cfg: &EnvConfig, upper: usize, lower: usize) -> bool {
        let u = &self.blocks[upper];
        let l = &self.blocks[lower];
        !u.held
            && !l.held
            && (u.pos[0] - l.pos[0]).abs() < cfg.block_size / 2.0
            && (u.pos[1] - (l.pos[1] + cfg.block_size)).abs() < 1e-9
    }
}

/// Samples an initial state. The blue block never starts inside its bring
/// zone and neither block starts over a slot.
pub fn reset(cfg: &EnvConfig, seed: u64, variant: ResetVariant) -> WorldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = cfg.block_x_limit() - 0.05;
    let rest = cfg.floor_rest();
    let blue_target = cfg.slot_target(BLUE)[0];
    let bx = loop {
        let x: f64 = rng.random_range(-lim..lim);
        let clear_zone = (x - blue_target).abs() >= cfg.bring_tol;
        if clear_zone && !cfg.over_slot(x) {
            break x;
        }
    };
    let (gx, gy) = match variant {
        ResetVariant::Standard => loop {
            let x: f64 = rng.random_range(-lim..lim);
            if (x - bx).abs() >= cfg.block_size && !cfg.over_slot(x) {
                break (x, rest);
            }
        },
        ResetVariant::UnstackStack => (bx, rest + cfg.block_size),
    };
    let ex: f64 = rng.random_range(-lim..lim);
    let ey: f64 = rng.random_range(cfg.gripper_reset_low..cfg.gripper_reset_high);
    let block = |x: f64, y: f64| Block {
        pos: [x, y],
        vel: [0.0; 2],
        accel: 0.0,
        held: false,
    };
    WorldState {
        gripper: [ex, ey],
        gripper_vel: [0.0; 2],
        aperture: 1.0,
        aperture_history: [1.0, 1.0],
        blocks: [block(bx, rest), block(gx, gy)],
        grasp_offset: [0.0; 2],
        last_grip: 0.0,
        t: 0,
    }
}

/// One kinematic step.
pub fn step(cfg: &EnvConfig, state: &WorldState, action: EnvAction) -> WorldState {
    let action = EnvAction::new(action.dx, action.dy, action.grip);
    let mut s = state.clone();
    let old_gripper = state.gripper;
    let old_blocks = [state.blocks[0].pos, state.blocks[1].pos];
    let old_vel = [state.blocks[0].vel, state.blocks[1].vel];
    let hw = cfg.tray_half_width;

    let mut gx = (s.gripper[0] + action.dx * cfg.max_step).clamp(-hw, hw);
    let mut gy = (s.gripper[1] + action.dy * cfg.max_step).clamp(0.0, cfg.ceiling);

    if let Some(h) = s.held_block() {
        let [ox, oy] = s.grasp_offset;
        let lim = cfg.block_x_limit();
        gx = gx.clamp((-hw).max(-lim - ox), hw.min(lim - ox));
        // blocks cannot be pushed sideways into the other block
        let cur_y = s.blocks[h].pos[1];
        if s.obstacle_top(cfg, h, gx + ox) > cur_y.max(gy + oy) + 1e-9 {
            gx = s.gripper[0];
        }
        let top = s.obstacle_top(cfg, h, gx + ox);
        let floor = if top <= cur_y + 1e-9 {
            top
        } else {
            s.support_height(cfg, h, gx + ox)
        };
        gy = gy.clamp(0.0_f64.max(floor - oy), cfg.ceiling);
        s.blocks[h].pos = [gx + ox, gy + oy];
    }
    s.gripper = [gx, gy];

    // grip channel: > 0 opens, < 0 closes, within one step
    s.aperture_history = [state.aperture, state.aperture_history[0]];
    if action.grip > 0.0 {
        s.aperture = 1.0;
        for b in &mut s.blocks {
            b.held = false;
        }
    } else if action.grip < 0.0 {
        if state.aperture > 0.5 && s.held_block().is_none() {
            let nearest = (0..2)
                .map(|i| (i, dist(s.blocks[i].pos, s.gripper)))
                .filter(|&(_, d)| d < cfg.grasp_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, _)) = nearest {
                s.blocks[i].held = true;
                s.grasp_offset = [
                    s.blocks[i].pos[0] - s.gripper[0],
                    s.blocks[i].pos[1] - s.gripper[1],
                ];
            }
        }
        s.aperture = 0.0;
    }
    if s.held_block().is_none() {
        s.grasp_offset = [0.0; 2];
    }

    // free blocks fall, lower one first so stacks settle in order
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| s.blocks[a].pos[1].total_cmp(&s.blocks[b].pos[1]));
    for i in order {
        if s.blocks[i].held {
            continue;
        }
        let support = s.support_height(cfg, i, s.blocks[i].pos[0]);
        let y = s.blocks[i].pos[1];
        if y > support {
            s.blocks[i].pos[1] = (y - cfg.fall_speed).max(support);
        }
    }

    s.gripper_vel = [s.gripper[0] - old_gripper[0], s.gripper[1] - old_gripper[1]];
    for i in 0..2 {
        let b = &mut s.blocks[i];
        b.vel = [b.pos[0] - old_blocks[i][0], b.pos[1] - old_blocks[i][1]];
        b.accel = dist(b.vel, old_vel[i]);
    }
    s.last_grip = action.grip;
    s.t += 1;
    s
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Observation layout (25 entries):
///
/// | range  | content                          |
/// |--------|----------------------------------|
/// | 0..2   | gripper position                 |
/// | 2..4   | gripper velocity                 |
/// | 4..7   | aperture now, one and two back   |
/// | 7..9   | blue position                    |
/// | 9..11  | green position                   |
/// | 11..13 | blue velocity                    |
/// | 13..15 | green velocity                   |
/// | 15..17 | blue - gripper                   |
/// | 17..19 | green - gripper                  |
/// | 19..21 | blue - green                     |
/// | 21..23 | blue - blue slot target          |
/// | 23..25 | green - green slot target        |
pub fn observe(cfg: &EnvConfig, s: &WorldState) -> [f64; OBS_DIM] {
    let b = s.blocks[BLUE].pos;
    let g = s.blocks[GREEN].pos;
    let e = s.gripper;
    let bz = cfg.slot_target(BLUE);
    let gz = cfg.slot_target(GREEN);
    [
        e[0],
        e[1],
        s.gripper_vel[0],
        s.gripper_vel[1],
        s.aperture,
        s.aperture_history[0],
        s.aperture_history[1],
        b[0],
        b[1],
        g[0],
        g[1],
        s.blocks[BLUE].vel[0],
        s.blocks[BLUE].vel[1],
        s.blocks[GREEN].vel[0],
        s.blocks[GREEN].vel[1],
        b[0] - e[0],
        b[1] - e[1],
        g[0] - e[0],
        g[1] - e[1],
        b[0] - g[0],
        b[1] - g[1],
        b[0] - bz[0],
        b[1] - bz[1],
        g[0] - gz[0],
        g[1] - gz[1],
    ]
}

#[cfg(test)]
pub(crate) fn in_bounds(cfg: &EnvConfig, s: &WorldState) -> bool {
    let hw = cfg.tray_half_width;
    let lim = cfg.block_x_limit() + 1e-9;
    let gripper_ok = s.gripper[0].abs() <= hw
        && s.gripper[1] >= 0.0
        && s.gripper[1] <= cfg.ceiling;
    let blocks_ok = s.blocks.iter().all(|b| {
        b.pos[0].abs() <= lim && b.pos[1] >= cfg.slot_rest() - 1e-9 && b.pos[1] <= cfg.ceiling + cfg.grasp_radius
    });
    gripper_ok && blocks_ok
}
