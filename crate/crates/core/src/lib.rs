//! Posture-aware quadruped locomotion: a desk-scale simulator plus the
//! training stack (PPO with an asymmetric actor-critic, adversarial motion
//! priors, curricula and domain randomization) that learns to track
//! six-dimensional velocity and posture commands.

pub mod amp;
pub mod archive;
pub mod config;
pub mod curricula;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod nn;
pub mod randomization;
pub mod rl;
pub mod terrain;
pub mod train;
