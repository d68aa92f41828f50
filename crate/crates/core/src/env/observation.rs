//! Actor (proprioceptive) and critic (privileged) observation vectors.
//!
//! Proprioceptive layout, 48 channels:
//!
//! | range  | content                                   |
//! |--------|-------------------------------------------|
//! | 0      | body yaw rate × 0.25                      |
//! | 1..3   | pitch, roll (rad)                         |
//! | 3..6   | gravity direction in the body frame       |
//! | 6..12  | command (vx, vy, wz, dh, pitch, roll)     |
//! | 12..24 | joint position minus default (rad)        |
//! | 24..36 | joint velocity × 0.05                     |
//! | 36..48 | previous-step joint position minus default|
//!
//! Privileged layout, 42 channels: body-frame linear velocity × 2 (3),
//! base height above the 17 scan points (17), friction, restitution,
//! total mass minus nominal (kg), CoM offset × 10 (3), foot forces × 0.01
//! (12), contact flags (4).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::command::Command6D;
use super::orientation::quat_to_euler;
use crate::dynamics::{DomainParams, RobotModel, RobotState, NUM_JOINTS, NUM_LEGS};
use crate::terrain::{TerrainError, TerrainMap, HEIGHT_SCAN_POINTS};

pub const PROPRIO_DIM: usize = 48;
pub const PRIVILEGED_DIM: usize = 42;

pub const YAW_RATE: usize = 0;
pub const PITCH: usize = 1;
pub const ROLL: usize = 2;
pub const GRAVITY: usize = 3;
pub const COMMAND: usize = 6;
pub const JOINT_POS: usize = 12;
pub const JOINT_VEL: usize = 24;
pub const PREV_JOINT_POS: usize = 36;

pub const YAW_RATE_SCALE: f64 = 0.25;
pub const JOINT_VEL_SCALE: f64 = 0.05;
pub const LIN_VEL_SCALE: f64 = 2.0;
pub const COM_SCALE: f64 = 10.0;
pub const FORCE_SCALE: f64 = 0.01;

/// Half-widths of the uniform sensor noise, in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBands {
    pub joint_pos: f64,
    pub joint_vel: f64,
    pub yaw_rate: f64,
    pub pitch_roll: f64,
    pub gravity: f64,
}

impl Default for NoiseBands {
    fn default() -> Self {
        Self { joint_pos: 0.01, joint_vel: 0.5, yaw_rate: 0.1, pitch_roll: 0.02, gravity: 0.05 }
    }
}

/// Noise-free proprioceptive observation.
pub fn build_observation(
    state: &RobotState,
    cmd: &Command6D,
    prev_joint_pos: &[f64; NUM_JOINTS],
    model: &RobotModel,
) -> [f64; PROPRIO_DIM] {
    let mut o = [0.0; PROPRIO_DIM];
    let e = quat_to_euler(&state.base_quat);
    let g = state.projected_gravity();
    o[YAW_RATE] = state.base_ang_vel.z * YAW_RATE_SCALE;
    o[PITCH] = e.pitch;
    o[ROLL] = e.roll;
    o[GRAVITY..GRAVITY + 3].copy_from_slice(g.as_slice());
    o[COMMAND..COMMAND + 6].copy_from_slice(&cmd.to_array());
    for j in 0..NUM_JOINTS {
        o[JOINT_POS + j] = state.joint_pos[j] - model.default_joint_pos[j];
        o[JOINT_VEL + j] = state.joint_vel[j] * JOINT_VEL_SCALE;
        o[PREV_JOINT_POS + j] = prev_joint_pos[j] - model.default_joint_pos[j];
    }
    o
}

/// Adds uniform sensor noise to every channel except the command.
pub fn add_noise<R: Rng + ?Sized>(obs: &mut [f64; PROPRIO_DIM], bands: &NoiseBands, rng: &mut R) {
    let mut u = |band: f64| if band > 0.0 { rng.random_range(-band..=band) } else { 0.0 };
    obs[YAW_RATE] += u(bands.yaw_rate) * YAW_RATE_SCALE;
    obs[PITCH] += u(bands.pitch_roll);
    obs[ROLL] += u(bands.pitch_roll);
    for k in 0..3 {
        obs[GRAVITY + k] += u(bands.gravity);
    }
    for j in 0..NUM_JOINTS {
        obs[JOINT_POS + j] += u(bands.joint_pos);
        obs[JOINT_VEL + j] += u(bands.joint_vel) * JOINT_VEL_SCALE;
        obs[PREV_JOINT_POS + j] += u(bands.joint_pos);
    }
}

pub fn build_privileged(
    state: &RobotState,
    terrain: &TerrainMap,
    params: &DomainParams,
    model: &RobotModel,
) -> Result<[f64; PRIVILEGED_DIM], TerrainError> {
    let mut o = [0.0; PRIVILEGED_DIM];
    let v = state.body_lin_vel();
    for k in 0..3 {
        o[k] = v[k] * LIN_VEL_SCALE;
    }
    let yaw = quat_to_euler(&state.base_quat).yaw;
    let scan = terrain.height_scan(state.base_pos.x, state.base_pos.y, yaw)?;
    for (i, h) in scan.iter().enumerate() {
        o[3 + i] = (state.base_pos.z - h).clamp(-1.0, 1.0);
    }
    let mut i = 3 + HEIGHT_SCAN_POINTS;
    o[i] = params.ground_friction;
    o[i + 1] = params.restitution;
    o[i + 2] = params.total_mass(model) - model.nominal_mass();
    i += 3;
    for k in 0..3 {
        o[i + k] = params.com_offset[k] * COM_SCALE;
    }
    i += 3;
    for leg in 0..NUM_LEGS {
        for k in 0..3 {
            o[i + leg * 3 + k] = state.foot_force[leg][k] * FORCE_SCALE;
        }
    }
    i += 3 * NUM_LEGS;
    for leg in 0..NUM_LEGS {
        o[i + leg] = if state.foot_contact[leg] { 1.0 } else { 0.0 };
    }
    debug_assert_eq!(i + NUM_LEGS, PRIVILEGED_DIM);
    Ok(o)
}
