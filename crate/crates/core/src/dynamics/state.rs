use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::model::{RobotModel, NUM_JOINTS, NUM_LEGS};

/// Ground-truth simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base_pos: Vector3<f64>,
    /// Body-to-world rotation.
    pub base_quat: UnitQuaternion<f64>,
    /// World frame, m/s.
    pub base_lin_vel: Vector3<f64>,
    /// Body frame, rad/s.
    pub base_ang_vel: Vector3<f64>,
    pub joint_pos: [f64; NUM_JOINTS],
    pub joint_vel: [f64; NUM_JOINTS],
    pub foot_contact: [bool; NUM_LEGS],
    /// World-frame contact force on each foot, N.
    pub foot_force: [[f64; 3]; NUM_LEGS],
    pub time: f64,
}

impl RobotState {
    /// Reference stance at `base_height`, no motion, contact fields unset.
    pub fn standing(model: &RobotModel, xy: [f64; 2], base_height: f64, yaw: f64) -> Self {
        Self {
            base_pos: Vector3::new(xy[0], xy[1], base_height),
            base_quat: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            base_lin_vel: Vector3::zeros(),
            base_ang_vel: Vector3::zeros(),
            joint_pos: model.default_joint_pos,
            joint_vel: [0.0; NUM_JOINTS],
            foot_contact: [false; NUM_LEGS],
            foot_force: [[0.0; 3]; NUM_LEGS],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        let v3 = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        v3(&self.base_pos)
            && v3(&self.base_lin_vel)
            && v3(&self.base_ang_vel)
            && self.base_quat.coords.iter().all(|x| x.is_finite())
            && self.joint_pos.iter().chain(self.joint_vel.iter()).all(|x| x.is_finite())
            && self.foot_force.iter().flatten().all(|x| x.is_finite())
            && self.time.is_finite()
    }

    /// Base linear velocity in the yaw-aligned frame.
    pub fn heading_lin_vel(&self) -> Vector3<f64> {
        let yaw = crate::env::orientation::quat_to_euler(&self.base_quat).yaw;
        UnitQuaternion::from_euler_angles(0.0, 0.0, -yaw) * self.base_lin_vel
    }

    /// Base linear velocity in the body frame.
    pub fn body_lin_vel(&self) -> Vector3<f64> {
        self.base_quat.inverse() * self.base_lin_vel
    }

    /// World-frame angular velocity.
    pub fn world_ang_vel(&self) -> Vector3<f64> {
        self.base_quat * self.base_ang_vel
    }

    /// World gravity direction expressed in the body frame.
    pub fn projected_gravity(&self) -> Vector3<f64> {
        self.base_quat.inverse() * Vector3::new(0.0, 0.0, -1.0)
    }
}
