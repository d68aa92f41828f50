use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub const NUM_LEGS: usize = 4;
pub const NUM_JOINTS: usize = 12;

/// Leg order used throughout: front-right, front-left, rear-right, rear-left.
pub const LEG_NAMES: [&str; NUM_LEGS] = ["FR", "FL", "RR", "RL"];

/// Lateral side of each leg, +1 for left legs.
pub const LEG_SIDE: [f64; NUM_LEGS] = [-1.0, 1.0, -1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// Normal stiffness, N/m.
    pub k_n: f64,
    /// Normal damping, N·s/m.
    pub c_n: f64,
    /// Tangential viscous gain before the friction-cone clamp, N·s/m.
    pub k_t: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { k_n: 10_000.0, c_n: 200.0, k_t: 400.0 }
    }
}

/// Static description of the robot. Joint-indexed arrays use
/// `leg * 3 + {0: hip roll, 1: thigh pitch, 2: calf pitch}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel {
    pub trunk_mass: f64,
    /// Effective trunk inertia about the CoM in the body frame. Leg inertia
    /// is folded in since the legs do not react on the trunk.
    pub trunk_inertia: Matrix3<f64>,
    pub link_masses: [f64; NUM_JOINTS],
    pub joint_inertia: [f64; NUM_JOINTS],
    pub joint_damping: [f64; NUM_JOINTS],
    pub joint_limits: [[f64; 2]; NUM_JOINTS],
    pub torque_limit: f64,
    pub hip_offsets: [[f64; 3]; NUM_LEGS],
    /// (hip lateral offset, thigh, calf), m.
    pub link_lengths: [f64; 3],
    pub default_joint_pos: [f64; NUM_JOINTS],
    pub reference_height: f64,
    /// Half sizes of the trunk collision box, m.
    pub trunk_half_extents: [f64; 3],
    pub gravity: f64,
    pub contact: ContactParams,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("joint {0} has an empty limit interval")]
    BadLimits(usize),
}

impl RobotModel {
    /// A1-sized quadruped: 0.366 × 0.194 m trunk footprint, 0.30 m
    /// reference height, 12 kg total.
    pub fn a1() -> Self {
        let hip = 0.08;
        let thigh = 0.2;
        let calf = 0.2;
        let reference_height = 0.30;
        let (thigh_angle, calf_angle) = stance_ik(thigh, calf, reference_height);
        let mut default_joint_pos = [0.0; NUM_JOINTS];
        let mut joint_limits = [[0.0; 2]; NUM_JOINTS];
        let mut link_masses = [0.0; NUM_JOINTS];
        let mut joint_inertia = [0.0; NUM_JOINTS];
        for leg in 0..NUM_LEGS {
            default_joint_pos[leg * 3 + 1] = thigh_angle;
            default_joint_pos[leg * 3 + 2] = calf_angle;
            joint_limits[leg * 3] = [-0.802, 0.802];
            joint_limits[leg * 3 + 1] = [-1.047, 4.189];
            joint_limits[leg * 3 + 2] = [-2.697, -0.916];
            link_masses[leg * 3] = 0.7;
            link_masses[leg * 3 + 1] = 1.0;
            link_masses[leg * 3 + 2] = 0.175;
            joint_inertia[leg * 3] = 0.02;
            joint_inertia[leg * 3 + 1] = 0.02;
            joint_inertia[leg * 3 + 2] = 0.02;
        }
        let (hx, hy) = (0.183, 0.047);
        Self {
            trunk_mass: 4.5,
            trunk_inertia: Matrix3::from_diagonal(&Vector3::new(0.12, 0.26, 0.30)),
            link_masses,
            joint_inertia,
            joint_damping: [0.01; NUM_JOINTS],
            joint_limits,
            torque_limit: 33.5,
            hip_offsets: [[hx, -hy, 0.0], [hx, hy, 0.0], [-hx, -hy, 0.0], [-hx, hy, 0.0]],
            link_lengths: [hip, thigh, calf],
            default_joint_pos,
            reference_height,
            trunk_half_extents: [0.183, 0.097, 0.057],
            gravity: 9.81,
            contact: ContactParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.trunk_mass <= 0.0 {
            return Err(ModelError::NonPositive("trunk_mass"));
        }
        if self.trunk_inertia.diagonal().iter().any(|&v| v <= 0.0) {
            return Err(ModelError::NonPositive("trunk_inertia"));
        }
        if self.link_masses.iter().any(|&m| m <= 0.0) {
            return Err(ModelError::NonPositive("link_masses"));
        }
        if self.joint_inertia.iter().any(|&m| m <= 0.0) {
            return Err(ModelError::NonPositive("joint_inertia"));
        }
        if self.torque_limit <= 0.0 {
            return Err(ModelError::NonPositive("torque_limit"));
        }
        for (j, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if lo >= hi {
                return Err(ModelError::BadLimits(j));
            }
        }
        Ok(())
    }

    pub fn total_link_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }

    pub fn nominal_mass(&self) -> f64 {
        self.trunk_mass + self.total_link_mass()
    }

    /// Base height at which the nominal robot rests on flat ground in the
    /// reference stance: springs compressed by the static load.
    pub fn resting_height(&self) -> f64 {
        self.reference_height - self.nominal_mass() * self.gravity / (NUM_LEGS as f64 * self.contact.k_n)
    }
}

/// Thigh/calf angles placing the foot straight below the thigh joint at `height`.
fn stance_ik(thigh: f64, calf: f64, height: f64) -> (f64, f64) {
    // Law of cosines on the triangle thigh-joint / knee / foot.
    let cos_knee = (thigh * thigh + calf * calf - height * height) / (2.0 * thigh * calf);
    let knee = std::f64::consts::PI - cos_knee.clamp(-1.0, 1.0).acos();
    let cos_a = (thigh * thigh + height * height - calf * calf) / (2.0 * thigh * height);
    let a = cos_a.clamp(-1.0, 1.0).acos();
    (a, -knee)
}

/// Per-episode physical parameters drawn by domain randomization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParams {
    pub ground_friction: f64,
    pub restitution: f64,
    /// Extra payload on the trunk, kg.
    pub load_mass: f64,
    /// Multiplier on every link mass.
    pub link_mass_scale: f64,
    /// CoM displacement from the base origin in the body frame, m.
    pub com_offset: [f64; 3],
    pub p_gain_scale: f64,
    pub d_gain_scale: f64,
    pub motor_power_scale: f64,
    /// Delay before a new joint target takes effect, s.
    pub action_delay: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        Self {
            ground_friction: 1.0,
            restitution: 0.0,
            load_mass: 0.0,
            link_mass_scale: 1.0,
            com_offset: [0.0; 3],
            p_gain_scale: 1.0,
            d_gain_scale: 1.0,
            motor_power_scale: 1.0,
            action_delay: 0.0,
        }
    }
}

impl DomainParams {
    pub fn total_mass(&self, model: &RobotModel) -> f64 {
        model.trunk_mass + self.load_mass + self.link_mass_scale * model.total_link_mass()
    }

    pub fn torque_limit(&self, model: &RobotModel) -> f64 {
        model.torque_limit * self.motor_power_scale
    }
}
