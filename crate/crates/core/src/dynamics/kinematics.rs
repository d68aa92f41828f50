use nalgebra::{UnitQuaternion, Vector3};

use super::model::{RobotModel, LEG_SIDE, NUM_JOINTS, NUM_LEGS};

/// Body-frame geometry of one leg at a joint configuration.
#[derive(Debug, Clone, Copy)]
pub struct LegFrame {
    pub hip: Vector3<f64>,
    /// Thigh pitch joint location.
    pub thigh: Vector3<f64>,
    pub knee: Vector3<f64>,
    pub foot: Vector3<f64>,
    /// Pitch axis of the thigh and calf joints.
    pub pitch_axis: Vector3<f64>,
    /// d(foot)/d(q) columns for the leg's three joints.
    pub jacobian: [Vector3<f64>; 3],
}

impl LegFrame {
    pub fn foot_velocity(&self, qd: &[f64]) -> Vector3<f64> {
        self.jacobian[0] * qd[0] + self.jacobian[1] * qd[1] + self.jacobian[2] * qd[2]
    }
}

fn rot_x(a: f64) -> nalgebra::Rotation3<f64> {
    nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

fn rot_y(a: f64) -> nalgebra::Rotation3<f64> {
    nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

/// Hip roll about body x, then thigh and calf pitch about the rolled y axis.
pub fn leg_frame(model: &RobotModel, leg: usize, q: &[f64]) -> LegFrame {
    let [l_hip, l_thigh, l_calf] = model.link_lengths;
    let hip = Vector3::from(model.hip_offsets[leg]);
    let roll = rot_x(q[0]);
    let thigh_rot = rot_y(q[1]);
    let calf_rot = thigh_rot * rot_y(q[2]);
    let lateral = Vector3::new(0.0, LEG_SIDE[leg] * l_hip, 0.0);
    let thigh = hip + roll * lateral;
    let knee = thigh + roll * (thigh_rot * Vector3::new(0.0, 0.0, -l_thigh));
    let foot = knee + roll * (calf_rot * Vector3::new(0.0, 0.0, -l_calf));
    let pitch_axis = roll * Vector3::y();
    let jacobian = [
        Vector3::x().cross(&(foot - hip)),
        pitch_axis.cross(&(foot - thigh)),
        pitch_axis.cross(&(foot - knee)),
    ];
    LegFrame { hip, thigh, knee, foot, pitch_axis, jacobian }
}

pub fn leg_frames(model: &RobotModel, joint_pos: &[f64; NUM_JOINTS]) -> [LegFrame; NUM_LEGS] {
    std::array::from_fn(|leg| leg_frame(model, leg, &joint_pos[leg * 3..leg * 3 + 3]))
}

/// World-frame foot positions.
pub fn forward_kinematics(
    model: &RobotModel,
    joint_pos: &[f64; NUM_JOINTS],
    base_pos: &Vector3<f64>,
    base_quat: &UnitQuaternion<f64>,
) -> [Vector3<f64>; NUM_LEGS] {
    let frames = leg_frames(model, joint_pos);
    std::array::from_fn(|leg| base_pos + base_quat * frames[leg].foot)
}

/// Body-frame foot positions.
pub fn foot_positions_body(model: &RobotModel, joint_pos: &[f64; NUM_JOINTS]) -> [Vector3<f64>; NUM_LEGS] {
    let frames = leg_frames(model, joint_pos);
    std::array::from_fn(|leg| frames[leg].foot)
}

/// Generalized gravity torque of one leg's links, dU/dq, given gravity
/// expressed in the body frame. Link CoMs sit at the hip, mid-thigh and mid-calf.
pub fn leg_gravity_torque(
    frame: &LegFrame,
    masses: [f64; 3],
    gravity_body: &Vector3<f64>,
) -> [f64; 3] {
    let hip_com = 0.5 * (frame.hip + frame.thigh);
    let thigh_com = 0.5 * (frame.thigh + frame.knee);
    let calf_com = 0.5 * (frame.knee + frame.foot);
    // U = -Σ m g·p, so dU/dq = -Σ m g·(axis × (p - pivot)).
    let roll_term = |p: &Vector3<f64>| Vector3::x().cross(&(p - frame.hip));
    let pitch_term = |p: &Vector3<f64>, pivot: &Vector3<f64>| frame.pitch_axis.cross(&(p - pivot));
    let g = gravity_body;
    let t0 = -(masses[0] * g.dot(&roll_term(&hip_com))
        + masses[1] * g.dot(&roll_term(&thigh_com))
        + masses[2] * g.dot(&roll_term(&calf_com)));
    let t1 = -(masses[1] * g.dot(&pitch_term(&thigh_com, &frame.thigh))
        + masses[2] * g.dot(&pitch_term(&calf_com, &frame.thigh)));
    let t2 = -(masses[2] * g.dot(&pitch_term(&calf_com, &frame.knee)));
    [t0, t1, t2]
}
