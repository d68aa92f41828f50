use crate::dynamics::{foot_positions_body, RobotModel, RobotState, NUM_JOINTS, NUM_LEGS};
use crate::terrain::{TerrainError, TerrainMap};

/// Joint positions 12, joint velocities 12, base height above terrain 1,
/// body-frame linear velocity 3, body angular velocity 3, body-frame foot
/// positions 12.
pub const AMP_STATE_DIM: usize = 43;
pub const AMP_PAIR_DIM: usize = 2 * AMP_STATE_DIM;

pub fn amp_features(state: &RobotState, terrain: &TerrainMap, model: &RobotModel) -> Result<[f64; AMP_STATE_DIM], TerrainError> {
    let mut f = [0.0; AMP_STATE_DIM];
    f[..NUM_JOINTS].copy_from_slice(&state.joint_pos);
    f[NUM_JOINTS..2 * NUM_JOINTS].copy_from_slice(&state.joint_vel);
    let ground = terrain.sample_height(state.base_pos.x, state.base_pos.y)?;
    f[24] = state.base_pos.z - ground;
    f[25..28].copy_from_slice(state.body_lin_vel().as_slice());
    f[28..31].copy_from_slice(state.base_ang_vel.as_slice());
    for (leg, p) in foot_positions_body(model, &state.joint_pos).iter().enumerate().take(NUM_LEGS) {
        f[31 + 3 * leg..34 + 3 * leg].copy_from_slice(p.as_slice());
    }
    Ok(f)
}
