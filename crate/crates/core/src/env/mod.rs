//! The locomotion task: observations, PD actuation, rewards, commands and
//! episode logic around the simulator.

pub mod command;
mod loco;
pub mod observation;
pub mod orientation;
pub mod pd;
pub mod reward;

pub use command::Command6D;
pub use loco::{EnvConfig, EnvContext, EnvState, EpisodeSpec, EpisodeSummary, LocoEnv, StepInfo, StepOutcome};
pub use observation::{NoiseBands, PRIVILEGED_DIM, PROPRIO_DIM};
pub use orientation::{quat_to_euler, Euler};
pub use pd::{pd_torque, PdGains};
pub use reward::{task_reward, total_reward, RegTerms, RewardWeights, TaskRewards, Tracking};

/// Joint-target action width.
pub const ACTION_DIM: usize = crate::dynamics::NUM_JOINTS;
