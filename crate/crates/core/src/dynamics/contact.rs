//! Penalty contact between point feet and the heightfield.

use nalgebra::Vector3;

use super::kinematics::LegFrame;
use super::model::{ContactParams, DomainParams, NUM_LEGS};
use super::state::RobotState;
use super::DynamicsError;
use crate::terrain::TerrainMap;

/// Result of evaluating the contact law for one foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootContact {
    pub force: Vector3<f64>,
    pub in_contact: bool,
}

/// Spring-damper normal force with restitution-scaled damping on the
/// rebound phase, plus a viscous tangential force clamped to the friction
/// cone. `penetration > 0` means the foot is below the surface; `velocity`
/// is the foot's world velocity.
pub fn penalty_force(
    penetration: f64,
    velocity: &Vector3<f64>,
    contact: &ContactParams,
    friction: f64,
    restitution: f64,
) -> FootContact {
    if penetration <= 0.0 {
        return FootContact { force: Vector3::zeros(), in_contact: false };
    }
    let damping = if velocity.z > 0.0 { contact.c_n * (1.0 - restitution) } else { contact.c_n };
    let normal = (contact.k_n * penetration - damping * velocity.z).max(0.0);
    let slip = Vector3::new(velocity.x, velocity.y, 0.0);
    let speed = slip.norm();
    let tangential = if speed > 0.0 {
        let magnitude = (contact.k_t * speed).min(friction * normal);
        -slip * (magnitude / speed)
    } else {
        Vector3::zeros()
    };
    FootContact { force: tangential + Vector3::new(0.0, 0.0, normal), in_contact: true }
}

/// Contact forces and flags for all four feet of `state`.
pub fn contact_forces_with_frames(
    state: &RobotState,
    frames: &[LegFrame; NUM_LEGS],
    terrain: &TerrainMap,
    contact: &ContactParams,
    params: &DomainParams,
) -> Result<[FootContact; NUM_LEGS], DynamicsError> {
    let rot = state.base_quat;
    let omega_world = rot * state.base_ang_vel;
    let mut out = [FootContact { force: Vector3::zeros(), in_contact: false }; NUM_LEGS];
    for (leg, frame) in frames.iter().enumerate() {
        let offset = rot * frame.foot;
        let pos = state.base_pos + offset;
        let ground = terrain
            .sample_height(pos.x, pos.y)
            .map_err(|_| DynamicsError::FootOutsideTerrain { leg, x: pos.x, y: pos.y })?;
        let qd = &state.joint_vel[leg * 3..leg * 3 + 3];
        let vel = state.base_lin_vel + omega_world.cross(&offset) + rot * frame.foot_velocity(qd);
        out[leg] = penalty_force(ground - pos.z, &vel, contact, params.ground_friction, params.restitution);
    }
    Ok(out)
}
