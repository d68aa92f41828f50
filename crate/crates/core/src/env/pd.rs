use serde::{Deserialize, Serialize};

use crate::dynamics::{DomainParams, RobotModel, NUM_JOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 28.0, kd: 0.7 }
    }
}

/// Joint torques tracking `q_des` with zero target velocity, saturated at
/// the power-scaled torque limit.
pub fn pd_torque(
    q_des: &[f64; NUM_JOINTS],
    q: &[f64; NUM_JOINTS],
    qd: &[f64; NUM_JOINTS],
    gains: PdGains,
    params: &DomainParams,
    model: &RobotModel,
) -> [f64; NUM_JOINTS] {
    let kp = gains.kp * params.p_gain_scale;
    let kd = gains.kd * params.d_gain_scale;
    let limit = params.torque_limit(model);
    std::array::from_fn(|j| (kp * (q_des[j] - q[j]) - kd * qd[j]).clamp(-limit, limit))
}
