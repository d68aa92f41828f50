//! Simplified floating-base quadruped simulator.
//!
//! The trunk is a single rigid body driven by gravity and the contact forces
//! of four point feet. Each of the 12 joints is an independent second-order
//! system: the legs move the feet but do not react on the trunk, and a stance
//! leg does not feel its own weight. Foot contact is a penalty law on the
//! heightfield. Integration is semi-implicit Euler (velocities, then
//! positions); the constant gravity drift is integrated exactly and the
//! trunk rotation uses the implicit midpoint rule.

mod contact;
pub mod kinematics;
mod model;
mod state;

use nalgebra::{UnitQuaternion, Vector3};

pub use contact::{contact_forces_with_frames, penalty_force, FootContact};
pub use kinematics::{foot_positions_body, forward_kinematics, leg_frame, leg_frames, LegFrame};
pub use model::{
    ContactParams, DomainParams, ModelError, RobotModel, LEG_NAMES, LEG_SIDE, NUM_JOINTS, NUM_LEGS,
};
pub use state::RobotState;

use crate::terrain::TerrainMap;

/// Physics step used everywhere in training, s.
pub const PHYSICS_DT: f64 = 1.0 / 200.0;
/// Default cap on the magnitude of a velocity push, m/s.
pub const MAX_PUSH: f64 = 1.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("foot {leg} at ({x:.3}, {y:.3}) is outside the terrain tile")]
    FootOutsideTerrain { leg: usize, x: f64, y: f64 },
    #[error("simulation produced a non-finite state")]
    NonFiniteState,
}

/// Contact forces and flags for each foot in `state`.
pub fn contact_forces(
    state: &RobotState,
    terrain: &TerrainMap,
    model: &RobotModel,
    params: &DomainParams,
) -> Result<([[f64; 3]; NUM_LEGS], [bool; NUM_LEGS]), DynamicsError> {
    let frames = leg_frames(model, &state.joint_pos);
    let contacts = contact_forces_with_frames(state, &frames, terrain, &model.contact, params)?;
    Ok((
        std::array::from_fn(|i| contacts[i].force.into()),
        std::array::from_fn(|i| contacts[i].in_contact),
    ))
}

/// Motor torques after the power-scaled saturation.
pub fn applied_torques(torques: &[f64; NUM_JOINTS], model: &RobotModel, params: &DomainParams) -> [f64; NUM_JOINTS] {
    let limit = params.torque_limit(model);
    std::array::from_fn(|j| torques[j].clamp(-limit, limit))
}

/// Advances the simulation by `dt`.
pub fn step(
    state: &RobotState,
    torques: &[f64; NUM_JOINTS],
    terrain: &TerrainMap,
    model: &RobotModel,
    params: &DomainParams,
    dt: f64,
) -> Result<RobotState, DynamicsError> {
    let frames = leg_frames(model, &state.joint_pos);
    let contacts = contact_forces_with_frames(state, &frames, terrain, &model.contact, params)?;
    let torques = applied_torques(torques, model, params);
    let rot = state.base_quat;
    let gravity = Vector3::new(0.0, 0.0, -model.gravity);
    let gravity_body = rot.inverse() * gravity;
    let supported = contacts.iter().any(|c| c.in_contact);

    let mut next = state.clone();

    // Joints.
    for leg in 0..NUM_LEGS {
        let load = if supported && !contacts[leg].in_contact {
            let m = &model.link_masses[leg * 3..leg * 3 + 3];
            let s = params.link_mass_scale;
            kinematics::leg_gravity_torque(&frames[leg], [m[0] * s, m[1] * s, m[2] * s], &gravity_body)
        } else {
            [0.0; 3]
        };
        for k in 0..3 {
            let j = leg * 3 + k;
            let qd = state.joint_vel[j];
            let acc = (torques[j] - model.joint_damping[j] * qd - load[k]) / model.joint_inertia[j];
            let mut qd_next = qd + dt * acc;
            let mut q_next = state.joint_pos[j] + dt * qd_next;
            let [lo, hi] = model.joint_limits[j];
            if q_next < lo {
                q_next = lo;
                qd_next = qd_next.max(0.0);
            } else if q_next > hi {
                q_next = hi;
                qd_next = qd_next.min(0.0);
            }
            next.joint_vel[j] = qd_next;
            next.joint_pos[j] = q_next;
        }
    }

    // Trunk.
    let mass = params.total_mass(model);
    let inertia = model.trunk_inertia * (mass / model.nominal_mass());
    let inertia_inv = inertia.try_inverse().ok_or(DynamicsError::NonFiniteState)?;
    let com_offset = Vector3::from(params.com_offset);
    let com = state.base_pos + rot * com_offset;

    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    for (frame, c) in frames.iter().zip(contacts.iter()) {
        if !c.in_contact {
            continue;
        }
        let foot = state.base_pos + rot * frame.foot;
        force += c.force;
        moment += (foot - com).cross(&c.force);
    }
    // Euler's equations by the implicit midpoint rule (fixed-point solve):
    // torque-free rotation then conserves kinetic energy and |L|.
    let omega = state.base_ang_vel;
    let moment_body = rot.inverse() * moment;
    let mut omega_next = omega + dt * (inertia_inv * (moment_body - omega.cross(&(inertia * omega))));
    for _ in 0..6 {
        let mid = 0.5 * (omega + omega_next);
        omega_next = omega + dt * (inertia_inv * (moment_body - mid.cross(&(inertia * mid))));
    }
    let mut rot_next = rot * UnitQuaternion::from_scaled_axis(0.5 * (omega + omega_next) * dt);
    rot_next.renormalize();

    let v_com = state.base_lin_vel + rot * omega.cross(&com_offset);
    let v_com_next = v_com + dt * (force / mass + gravity);
    let com_next = com + dt * v_com_next - 0.5 * dt * dt * gravity;

    next.base_quat = rot_next;
    next.base_ang_vel = omega_next;
    next.base_pos = com_next - rot_next * com_offset;
    next.base_lin_vel = v_com_next - rot_next * omega_next.cross(&com_offset);
    next.time = state.time + dt;

    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    let frames = leg_frames(model, &next.joint_pos);
    let contacts = contact_forces_with_frames(&next, &frames, terrain, &model.contact, params)?;
    for leg in 0..NUM_LEGS {
        next.foot_contact[leg] = contacts[leg].in_contact;
        next.foot_force[leg] = contacts[leg].force.into();
    }
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState);
    }
    Ok(next)
}

/// Instantaneous change of base velocity (external push).
pub fn apply_push(state: &RobotState, delta_v: &Vector3<f64>) -> RobotState {
    let mut next = state.clone();
    next.base_lin_vel += delta_v;
    next
}

/// Trunk kinetic + potential energy plus joint kinetic energy. Leg link
/// potential is excluded; it only acts while the trunk is supported.
pub fn mechanical_energy(state: &RobotState, model: &RobotModel, params: &DomainParams) -> f64 {
    let mass = params.total_mass(model);
    let inertia = model.trunk_inertia * (mass / model.nominal_mass());
    let com_offset = Vector3::from(params.com_offset);
    let v_com = state.base_lin_vel + state.base_quat * state.base_ang_vel.cross(&com_offset);
    let com = state.base_pos + state.base_quat * com_offset;
    let w = state.base_ang_vel;
    let joints: f64 = (0..NUM_JOINTS).map(|j| 0.5 * model.joint_inertia[j] * state.joint_vel[j].powi(2)).sum();
    0.5 * mass * v_com.norm_squared() + 0.5 * w.dot(&(inertia * w)) + mass * model.gravity * com.z + joints
}

/// Places the reference-stance robot on the terrain at `xy` so it starts at
/// rest on its compressed contact springs.
pub fn resting_state(model: &RobotModel, terrain: &TerrainMap, xy: [f64; 2], yaw: f64) -> Result<RobotState, DynamicsError> {
    let mut state = RobotState::standing(model, xy, 0.0, yaw);
    let feet = forward_kinematics(model, &state.joint_pos, &Vector3::zeros(), &state.base_quat);
    let mut lift = f64::NEG_INFINITY;
    for (leg, f) in feet.iter().enumerate() {
        let (x, y) = (xy[0] + f.x, xy[1] + f.y);
        let ground = terrain
            .sample_height(x, y)
            .map_err(|_| DynamicsError::FootOutsideTerrain { leg, x, y })?;
        lift = lift.max(ground - f.z);
    }
    state.base_pos.z = lift + model.resting_height() - model.reference_height;
    let (forces, flags) = contact_forces(&state, terrain, model, &DomainParams::default())?;
    state.foot_force = forces;
    state.foot_contact = flags;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::TILE_SIZE;

    fn flat() -> TerrainMap {
        TerrainMap::flat(TILE_SIZE)
    }

    #[test]
    fn default_model_is_valid() {
        let m = RobotModel::a1();
        m.validate().unwrap();
        assert!((m.nominal_mass() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_model_rejected() {
        let mut m = RobotModel::a1();
        m.joint_limits[4] = [1.0, 1.0];
        assert_eq!(m.validate(), Err(ModelError::BadLimits(4)));
        let mut m = RobotModel::a1();
        m.trunk_mass = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn free_fall_first_step() {
        let m = RobotModel::a1();
        let s = RobotState::standing(&m, [4.0, 4.0], 1.0, 0.0);
        let n = step(&s, &[0.0; NUM_JOINTS], &flat(), &m, &DomainParams::default(), PHYSICS_DT).unwrap();
        assert_eq!(n.base_lin_vel.z, -9.81 * PHYSICS_DT);
        assert_eq!(n.base_lin_vel.x, 0.0);
    }

    #[test]
    fn torque_saturates_at_limit() {
        let m = RobotModel::a1();
        let p = DomainParams::default();
        let mut t = [0.0; NUM_JOINTS];
        t[0] = 1.1 * m.torque_limit;
        t[1] = -1.1 * m.torque_limit;
        let a = applied_torques(&t, &m, &p);
        assert_eq!(a[0], m.torque_limit);
        assert_eq!(a[1], -m.torque_limit);
    }

    #[test]
    fn resting_robot_stays_put() {
        let m = RobotModel::a1();
        let p = DomainParams::default();
        let t = flat();
        let mut s = resting_state(&m, &t, [4.0, 4.0], 0.3).unwrap();
        let z0 = s.base_pos.z;
        for _ in 0..200 {
            s = step(&s, &[0.0; NUM_JOINTS], &t, &m, &p, PHYSICS_DT).unwrap();
        }
        assert!((s.base_pos.z - z0).abs() < 1e-3, "drift {}", s.base_pos.z - z0);
        assert!(s.foot_contact.iter().all(|&c| c));
    }

    #[test]
    fn push_adds_velocity_only() {
        let m = RobotModel::a1();
        let s = resting_state(&m, &flat(), [4.0, 4.0], 0.0).unwrap();
        assert_eq!(apply_push(&s, &Vector3::zeros()), s);
        let p = apply_push(&s, &Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(p.base_lin_vel.x, s.base_lin_vel.x + 0.5);
        assert_eq!(p.base_pos, s.base_pos);
        assert_eq!(p.joint_pos, s.joint_pos);
    }

    #[test]
    fn quaternion_stays_normalized() {
        let m = RobotModel::a1();
        let mut s = RobotState::standing(&m, [4.0, 4.0], 2.0, 0.0);
        s.base_ang_vel = Vector3::new(3.0, -2.0, 5.0);
        for _ in 0..400 {
            s = step(&s, &[0.0; NUM_JOINTS], &flat(), &m, &DomainParams::default(), PHYSICS_DT).unwrap();
            assert!((s.base_quat.coords.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contact_flags_match_forces() {
        let m = RobotModel::a1();
        let p = DomainParams::default();
        let t = flat();
        let mut s = resting_state(&m, &t, [4.0, 4.0], 0.0).unwrap();
        s.base_pos.z += 0.002;
        s.base_lin_vel = Vector3::new(0.3, 0.1, -0.4);
        for _ in 0..100 {
            s = step(&s, &[1.0; NUM_JOINTS], &t, &m, &p, PHYSICS_DT).unwrap();
            for leg in 0..NUM_LEGS {
                let f = Vector3::from(s.foot_force[leg]);
                if f.z > 0.0 {
                    assert!(s.foot_contact[leg]);
                }
                if !s.foot_contact[leg] {
                    assert_eq!(f, Vector3::zeros());
                }
            }
        }
    }

    #[test]
    fn joint_limits_hold() {
        let m = RobotModel::a1();
        let mut s = RobotState::standing(&m, [4.0, 4.0], 1.0, 0.0);
        let torques = [m.torque_limit; NUM_JOINTS];
        for _ in 0..200 {
            s = step(&s, &torques, &flat(), &m, &DomainParams::default(), PHYSICS_DT).unwrap();
            for j in 0..NUM_JOINTS {
                let [lo, hi] = m.joint_limits[j];
                assert!(s.joint_pos[j] >= lo - 0.05 && s.joint_pos[j] <= hi + 0.05);
            }
        }
    }

    #[test]
    fn foot_leaving_tile_is_reported() {
        let m = RobotModel::a1();
        let s = RobotState::standing(&m, [0.05, 4.0], 0.3, 0.0);
        let err = step(&s, &[0.0; NUM_JOINTS], &flat(), &m, &DomainParams::default(), PHYSICS_DT).unwrap_err();
        assert!(matches!(err, DynamicsError::FootOutsideTerrain { .. }));
    }
}
