use serde::{Deserialize, Serialize};

use super::command::Command6D;
use super::orientation::quat_to_euler;
use crate::dynamics::RobotState;
use crate::terrain::{TerrainError, TerrainMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub sigma_v: f64,
    pub sigma_w: f64,
    pub sigma_h: f64,
    pub sigma_theta: f64,
    pub w_v: f64,
    pub w_w: f64,
    pub w_h: f64,
    pub w_theta: f64,
    pub w_style: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub vertical_vel: f64,
    pub collision: f64,
    /// Gait-shaping bonus per second of swing, paid at touchdown.
    pub feet_air_time: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            sigma_v: 0.25,
            sigma_w: 0.25,
            sigma_h: 0.1,
            sigma_theta: 0.25,
            w_v: 1.0,
            w_w: 0.5,
            w_h: 0.3,
            w_theta: 0.3,
            w_style: 0.5,
            action_rate: 0.01,
            torque: 2e-5,
            vertical_vel: 1.0,
            collision: 1.0,
            feet_air_time: 0.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [self.sigma_v, self.sigma_w, self.sigma_h, self.sigma_theta];
        if sigmas.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err("reward sigmas must be positive".into());
        }
        let weights = [
            self.w_v,
            self.w_w,
            self.w_h,
            self.w_theta,
            self.w_style,
            self.action_rate,
            self.torque,
            self.vertical_vel,
            self.collision,
            self.feet_air_time,
        ];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err("reward weights must be non-negative".into());
        }
        Ok(())
    }
}

/// Measured quantities compared against a command. Velocities are in the
/// yaw-aligned frame; height is above the terrain under the CoM.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tracking {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub height: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Tracking {
    pub fn measure(state: &RobotState, terrain: &TerrainMap, com_offset: [f64; 3]) -> Result<Self, TerrainError> {
        let v = state.heading_lin_vel();
        let e = quat_to_euler(&state.base_quat);
        let com = state.base_pos + state.base_quat * nalgebra::Vector3::from(com_offset);
        let ground = terrain.sample_height(com.x, com.y)?;
        Ok(Self {
            vx: v.x,
            vy: v.y,
            wz: state.world_ang_vel().z,
            height: state.base_pos.z - ground,
            pitch: e.pitch,
            roll: e.roll,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskRewards {
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

pub fn task_reward(actual: &Tracking, cmd: &Command6D, reference_height: f64, w: &RewardWeights) -> TaskRewards {
    let ev = (actual.vx - cmd.vx).powi(2) + (actual.vy - cmd.vy).powi(2);
    let ew = (actual.wz - cmd.wz).powi(2);
    let eh = (actual.height - (reference_height + cmd.dh)).abs();
    let et = (actual.pitch - cmd.pitch).powi(2) + (actual.roll - cmd.roll).powi(2);
    TaskRewards {
        v: (-ev / w.sigma_v).exp(),
        w: (-ew / w.sigma_w).exp(),
        h: (-eh / w.sigma_h).exp(),
        theta: (-et / w.sigma_theta).exp(),
    }
}

/// Raw (non-negative) regularization magnitudes for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegTerms {
    /// ‖a_t − a_{t−1}‖²
    pub action_rate: f64,
    /// ‖τ‖²
    pub torque: f64,
    /// v_z²
    pub vertical_vel: f64,
    /// Number of non-foot contacts.
    pub collisions: f64,
    /// Summed swing time of feet touching down this step, less 0.5 s each.
    pub feet_air_time: f64,
}

/// Weighted reward sum. `posture_weight` gates the height and orientation
/// terms (reward curriculum).
pub fn total_reward(task: &TaskRewards, style: f64, reg: &RegTerms, w: &RewardWeights, posture_weight: f64) -> f64 {
    let tracking = w.w_v * task.v + w.w_w * task.w + posture_weight * (w.w_h * task.h + w.w_theta * task.theta);
    let penalty = w.action_rate * reg.action_rate
        + w.torque * reg.torque
        + w.vertical_vel * reg.vertical_vel
        + w.collision * reg.collisions;
    tracking + w.w_style * style - penalty + w.feet_air_time * reg.feet_air_time
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perfect(cmd: &Command6D) -> Tracking {
        Tracking { vx: cmd.vx, vy: cmd.vy, wz: cmd.wz, height: 0.3 + cmd.dh, pitch: cmd.pitch, roll: cmd.roll }
    }

    #[test]
    fn perfect_tracking_is_one() {
        let cmd = Command6D::new(0.4, -0.2, 0.5, -0.05, 0.2, 0.1);
        let r = task_reward(&perfect(&cmd), &cmd, 0.3, &RewardWeights::default());
        assert_eq!(r, TaskRewards { v: 1.0, w: 1.0, h: 1.0, theta: 1.0 });
    }

    #[test]
    fn velocity_error_at_sigma() {
        let w = RewardWeights::default();
        let cmd = Command6D::default();
        let mut a = perfect(&cmd);
        a.vx = 0.3;
        a.vy = 0.4; // ‖e‖² = 0.25 = σ_v
        assert!((task_reward(&a, &cmd, 0.3, &w).v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn height_uses_absolute_error() {
        let w = RewardWeights::default();
        let cmd = Command6D::default();
        let mut a = perfect(&cmd);
        a.height = 0.35;
        assert!((task_reward(&a, &cmd, 0.3, &w).h - (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn stage_zero_ignores_posture() {
        let w = RewardWeights::default();
        let task = TaskRewards { v: 0.5, w: 0.5, h: 0.1, theta: 0.2 };
        let r0 = total_reward(&task, 0.0, &RegTerms::default(), &w, 0.0);
        let r0b = total_reward(&TaskRewards { h: 0.9, theta: 0.9, ..task }, 0.0, &RegTerms::default(), &w, 0.0);
        assert_eq!(r0, r0b);
    }

    #[test]
    fn weighted_sum_examples() {
        let w = RewardWeights { w_w: 0.0, w_h: 0.0, w_theta: 0.0, ..Default::default() };
        let task = TaskRewards { v: 1.0, ..Default::default() };
        assert_eq!(total_reward(&task, 0.0, &RegTerms::default(), &w, 1.0), 1.0);
        assert_eq!(total_reward(&task, 0.75, &RegTerms::default(), &w, 1.0), 1.375);
    }

    #[test]
    fn penalties_subtract() {
        let w = RewardWeights::default();
        let reg = RegTerms { action_rate: 2.0, torque: 1000.0, vertical_vel: 0.1, collisions: 1.0, feet_air_time: 0.0 };
        let r = total_reward(&TaskRewards::default(), 0.0, &reg, &w, 1.0);
        assert!((r + (0.02 + 0.02 + 0.1 + 1.0)).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn components_in_unit_interval_and_decreasing(e1 in 0.0f64..3.0, e2 in 0.0f64..3.0) {
                let w = RewardWeights::default();
                let cmd = Command6D::default();
                let (lo, hi) = (e1.min(e2), e1.max(e2));
                let at = |e: f64| {
                    let a = Tracking { vx: e, vy: 0.0, wz: e, height: 0.3 + e, pitch: e, roll: 0.0 };
                    task_reward(&a, &cmd, 0.3, &w)
                };
                let (a, b) = (at(lo), at(hi));
                for (x, y) in [(a.v, b.v), (a.w, b.w), (a.h, b.h), (a.theta, b.theta)] {
                    prop_assert!(x > 0.0 && x <= 1.0 && y > 0.0 && y <= 1.0);
                    prop_assert!(x >= y);
                    if hi > lo + 1e-6 { prop_assert!(x > y); }
                }
            }
        }
    }
}
