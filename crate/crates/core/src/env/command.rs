use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

pub const PITCH_LIMIT: f64 = FRAC_PI_4;
pub const ROLL_LIMIT: f64 = FRAC_PI_6;
/// Absolute body height command range, m.
pub const HEIGHT_RANGE: [f64; 2] = [0.1, 0.4];
/// Absolute caps on the planar velocity commands, m/s.
pub const LIN_VEL_CAP: f64 = 1.5;
/// Absolute cap on the yaw-rate command, rad/s.
pub const YAW_RATE_CAP: f64 = 2.0;

/// Velocity and posture command: planar velocity (m/s), yaw rate (rad/s),
/// height offset from the reference height (m), pitch and roll (rad).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Command6D {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
    pub dh: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Command6D {
    pub const DIM: usize = 6;
    pub const CHANNELS: [&'static str; 6] = ["vx", "vy", "wz", "dh", "pitch", "roll"];

    pub fn new(vx: f64, vy: f64, wz: f64, dh: f64, pitch: f64, roll: f64) -> Self {
        Self { vx, vy, wz, dh, pitch, roll }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.vx, self.vy, self.wz, self.dh, self.pitch, self.roll]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Projects onto the absolute command limits. Non-finite channels
    /// become zero. Returns the clamped command and whether anything changed.
    pub fn clamped(&self, reference_height: f64) -> (Self, bool) {
        let lims = [
            [-LIN_VEL_CAP, LIN_VEL_CAP],
            [-LIN_VEL_CAP, LIN_VEL_CAP],
            [-YAW_RATE_CAP, YAW_RATE_CAP],
            [HEIGHT_RANGE[0] - reference_height, HEIGHT_RANGE[1] - reference_height],
            [-PITCH_LIMIT, PITCH_LIMIT],
            [-ROLL_LIMIT, ROLL_LIMIT],
        ];
        let raw = self.to_array();
        let mut out = raw;
        for (v, [lo, hi]) in out.iter_mut().zip(lims) {
            *v = if v.is_finite() { v.clamp(lo, hi) } else { 0.0 };
        }
        let changed = out.iter().zip(raw.iter()).any(|(a, b)| a.to_bits() != b.to_bits());
        (Self::from_array(out), changed)
    }

    pub fn within_limits(&self, reference_height: f64) -> bool {
        !self.clamped(reference_height).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_pitch_to_quarter_pi() {
        let (c, flagged) = Command6D::new(0.0, 0.0, 0.0, 0.0, 2.0, 0.0).clamped(0.3);
        assert!(flagged);
        assert_eq!(c.pitch, FRAC_PI_4);
    }

    #[test]
    fn in_range_command_untouched() {
        let cmd = Command6D::new(0.5, -0.2, 1.0, -0.1, 0.3, -0.2);
        assert_eq!(cmd.clamped(0.3), (cmd, false));
    }

    #[test]
    fn height_offset_respects_absolute_range() {
        let (c, _) = Command6D::new(0.0, 0.0, 0.0, -1.0, 0.0, 0.0).clamped(0.3);
        assert!((0.3 + c.dh - 0.1).abs() < 1e-12);
        let (c, _) = Command6D::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0).clamped(0.3);
        assert!((0.3 + c.dh - 0.4).abs() < 1e-12);
    }

    #[test]
    fn nan_channels_are_zeroed() {
        let (c, flagged) = Command6D::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0).clamped(0.3);
        assert!(flagged);
        assert_eq!(c.vx, 0.0);
    }
}
