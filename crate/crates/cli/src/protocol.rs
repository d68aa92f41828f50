//! Telemetry protocol: one JSON object per line over TCP.
//!
//! | direction | `type`    | fields |
//! |-----------|-----------|--------|
//! | server → client | `hello`   | `protocol`, `version`, `control_hz`, `channels` |
//! | client → server | `command` | `command` {vx, vy, wz, dh, pitch, roll} |
//! | server → client | `state`   | `step`, `time`, `command` (in effect, after clamping), `clamped`, `clamped_channels`, `actual`, `base_pos`, `yaw`, `episode_step` |
//! | server → client | `metrics` | `step`, `mean_rv`, `resets`, `clients` |
//! | server → client | `error`   | `message` |
//!
//! Velocities are m/s and rad/s, angles rad, `dh` is metres relative to
//! the reference standing height. `actual` uses the same six channels.

use quadpose::env::Command6D;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_NAME: &str = "quadpose-telemetry";
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Command { command: Command6D },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub step: u64,
    pub time: f64,
    pub command: Command6D,
    pub clamped: bool,
    pub clamped_channels: Vec<String>,
    pub actual: Command6D,
    pub base_pos: [f64; 3],
    pub yaw: f64,
    pub episode_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Hello { protocol: String, version: u32, control_hz: f64, channels: Vec<String> },
    State(StateFrame),
    Metrics { step: u64, mean_rv: f64, resets: u64, clients: usize },
    Error { message: String },
}

impl ServerFrame {
    pub fn hello(control_hz: f64) -> Self {
        ServerFrame::Hello {
            protocol: PROTOCOL_NAME.into(),
            version: PROTOCOL_VERSION,
            control_hz,
            channels: Command6D::CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerFrame::Error { message: message.into() }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("frame serializes");
        s.push('\n');
        s
    }
}

/// Parses one inbound line. Errors carry a message suitable for an
/// `error` frame.
pub fn parse_client_line(line: &str) -> Result<ClientFrame, String> {
    let frame: ClientFrame = serde_json::from_str(line.trim()).map_err(|e| format!("malformed frame: {e}"))?;
    let ClientFrame::Command { command } = &frame;
    if command.to_array().iter().any(|v| !v.is_finite()) {
        return Err("command channels must be finite".into());
    }
    Ok(frame)
}

/// Clamps an inbound command to the safety limits and names the channels
/// that changed.
pub fn clamp_command(cmd: &Command6D, reference_height: f64) -> (Command6D, Vec<String>) {
    let (c, _) = cmd.clamped(reference_height);
    let before = cmd.to_array();
    let after = c.to_array();
    let changed = (0..6).filter(|&k| before[k] != after[k]).map(|k| Command6D::CHANNELS[k].to_string()).collect();
    (c, changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_frame_parses() {
        let f = parse_client_line(r#"{"type":"command","command":{"vx":0.5,"vy":0,"wz":0,"dh":0,"pitch":0.1,"roll":0}}"#).unwrap();
        let ClientFrame::Command { command } = f;
        assert_eq!(command.vx, 0.5);
        assert_eq!(command.pitch, 0.1);
    }

    #[test]
    fn malformed_frames_rejected() {
        assert!(parse_client_line("not json").is_err());
        assert!(parse_client_line(r#"{"type":"launch"}"#).is_err());
        assert!(parse_client_line(r#"{"type":"command","command":{"vx":1}}"#).is_err());
    }

    #[test]
    fn pitch_clamp_is_flagged() {
        let (c, ch) = clamp_command(&Command6D::new(0.0, 0.0, 0.0, 0.0, 2.0, 0.0), 0.3);
        assert_eq!(c.pitch, std::f64::consts::FRAC_PI_4);
        assert_eq!(ch, vec!["pitch".to_string()]);
    }

    #[test]
    fn frames_round_trip() {
        let f = ServerFrame::hello(50.0);
        let back: ServerFrame = serde_json::from_str(f.to_line().trim()).unwrap();
        assert_eq!(back, f);
    }
}
