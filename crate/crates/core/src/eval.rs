//! Policy evaluation: batch tracking statistics and the command-tracking
//! report (commanded and measured channels at the control rate).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::curricula::{CommandGrid, TerrainSlot, PUSH_INTERVAL_EARLY};
use crate::dynamics::RobotModel;
use crate::env::{Command6D, EnvConfig, EnvContext, EpisodeSpec};
use crate::rl::ActorCritic;
use crate::terrain::TerrainKind;
use crate::train::{mean_actions, Agent};

/// Aggregate tracking quality of a policy over one episode per environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    /// Mean per-step velocity-tracking reward (max 1).
    pub mean_rv: f64,
    pub mean_rw: f64,
    pub mean_episode_length: f64,
    pub max_episode_length: usize,
    pub episodes: usize,
}

/// Runs `num_envs` environments for one episode each with mean actions.
pub fn evaluate_batch(policy: &ActorCritic<f32>, env: &EnvConfig, slot: TerrainSlot, grid: CommandGrid, num_envs: usize, seed: u64) -> BatchStats {
    let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: env.clone() });
    let spec = EpisodeSpec { slot, grid, push_interval: PUSH_INTERVAL_EARLY };
    let mut agents: Vec<Agent> = (0..num_envs)
        .map(|e| Agent::new(Arc::clone(&ctx), seed.wrapping_mul(1_000_003).wrapping_add(e as u64), spec, policy.config.history_len))
        .collect();
    let mut alive = vec![true; num_envs];
    let mut lengths = vec![0usize; num_envs];
    let (mut rv, mut rw, mut steps) = (0.0, 0.0, 0usize);
    let max_steps = env.max_episode_steps();
    for _ in 0..max_steps {
        let idx: Vec<usize> = (0..num_envs).filter(|&e| alive[e]).collect();
        if idx.is_empty() {
            break;
        }
        let refs: Vec<&Agent> = idx.iter().map(|&e| &agents[e]).collect();
        let acts = mean_actions(policy, &refs);
        for (k, &e) in idx.iter().enumerate() {
            let out = agents[e].env.step(&acts[k]);
            rv += out.task.v;
            rw += out.task.w;
            steps += 1;
            lengths[e] += 1;
            if out.info.done() {
                alive[e] = false;
            } else {
                agents[e].observe(&acts[k]);
            }
        }
    }
    let n = num_envs.max(1) as f64;
    BatchStats {
        mean_rv: rv / steps.max(1) as f64,
        mean_rw: rw / steps.max(1) as f64,
        mean_episode_length: lengths.iter().sum::<usize>() as f64 / n,
        max_episode_length: max_steps,
        episodes: num_envs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    /// Flat ground; commands drawn from the full command range and
    /// resampled every `resample_interval_s`.
    FlatDynamic,
    /// A fixed command on one terrain family and level.
    Static { terrain: TerrainKind, level: u8, command: Command6D },
}

impl Scenario {
    /// Walk forward at 1 m/s on `terrain`.
    pub fn forward(terrain: TerrainKind, level: u8) -> Self {
        Scenario::Static { terrain, level, command: Command6D::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub repetitions: usize,
    pub episode_length_s: f64,
    pub resample_interval_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { scenario: Scenario::FlatDynamic, seed: 0, repetitions: 5, episode_length_s: 20.0, resample_interval_s: 2.0 }
    }
}

/// Channel order: vx, vy, yaw rate, height offset, pitch, roll.
pub const CHANNELS: [&str; 6] = Command6D::CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub seed: u64,
    /// Per control step, commanded channels.
    pub commanded: Vec<[f64; 6]>,
    /// Per control step, measured channels (height as offset from the
    /// reference height).
    pub actual: Vec<[f64; 6]>,
    pub mean_abs_error: [f64; 6],
    pub mean_rv: f64,
    pub knee_collisions: u32,
    pub terminated_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_abs_error: [MeanStd; 6],
    pub mean_rv: MeanStd,
    pub knee_collisions: MeanStd,
    pub episode_length: MeanStd,
    pub early_terminations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub control_dt: f64,
    pub channels: [String; 6],
    pub runs: Vec<EvalRun>,
    pub summary: EvalSummary,
}

/// The tracking protocol: `repetitions` single-robot episodes with mean
/// actions, recording commanded and measured channels every control step.
pub fn evaluate(policy: &ActorCritic<f32>, train: &TrainConfig, cfg: &EvalConfig) -> EvalReport {
    let mut env_cfg = train.env.clone();
    env_cfg.episode_length_s = cfg.episode_length_s;
    env_cfg.resample_interval_s = cfg.resample_interval_s;
    let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: env_cfg });
    let ref_h = ctx.model.reference_height;
    let max_steps = ctx.config.max_episode_steps();
    let (slot, fixed) = match cfg.scenario {
        Scenario::FlatDynamic => (TerrainSlot { kind: TerrainKind::RoughFlat, level: 0 }, None),
        Scenario::Static { terrain, level, command } => (TerrainSlot { kind: terrain, level }, Some(command)),
    };
    let spec = EpisodeSpec { slot, grid: train.curriculum.grid.caps, push_interval: PUSH_INTERVAL_EARLY };
    let mut runs = Vec::with_capacity(cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let seed = cfg.seed.wrapping_add(rep as u64);
        let mut agent = Agent::new(Arc::clone(&ctx), seed, spec, policy.config.history_len);
        if let Some(c) = fixed {
            agent.env.fix_command(Some(c));
            agent.reset(spec);
        }
        let mut run = EvalRun {
            seed,
            commanded: Vec::with_capacity(max_steps),
            actual: Vec::with_capacity(max_steps),
            mean_abs_error: [0.0; 6],
            mean_rv: 0.0,
            knee_collisions: 0,
            terminated_early: false,
        };
        for _ in 0..max_steps {
            let cmd = agent.env.command();
            let act = mean_actions(policy, &[&agent])[0];
            let out = agent.env.step(&act);
            let tr = agent.env.tracking();
            run.commanded.push(cmd.to_array());
            run.actual.push([tr.vx, tr.vy, tr.wz, tr.height - ref_h, tr.pitch, tr.roll]);
            run.mean_rv += out.task.v;
            run.knee_collisions += out.info.knee_contacts;
            if out.info.done() {
                run.terminated_early = out.info.terminal();
                break;
            }
            agent.observe(&act);
        }
        let n = run.commanded.len().max(1) as f64;
        run.mean_rv /= n;
        for (c, a) in run.commanded.iter().zip(&run.actual) {
            for k in 0..6 {
                run.mean_abs_error[k] += (c[k] - a[k]).abs() / n;
            }
        }
        runs.push(run);
    }
    let col = |f: &dyn Fn(&EvalRun) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
    let summary = EvalSummary {
        mean_abs_error: std::array::from_fn(|k| col(&|r| r.mean_abs_error[k])),
        mean_rv: col(&|r| r.mean_rv),
        knee_collisions: col(&|r| f64::from(r.knee_collisions)),
        episode_length: col(&|r| r.commanded.len() as f64),
        early_terminations: runs.iter().filter(|r| r.terminated_early).count(),
    };
    EvalReport {
        config: cfg.clone(),
        control_dt: ctx.config.control_dt(),
        channels: CHANNELS.map(String::from),
        runs,
        summary,
    }
}
