//! Terrain, reward and command curricula.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::command::{Command6D, HEIGHT_RANGE, LIN_VEL_CAP, PITCH_LIMIT, ROLL_LIMIT, YAW_RATE_CAP};
use crate::randomization::Range;
use crate::terrain::{TerrainKind, MAX_LEVEL};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CurriculumError {
    #[error("reward-stage thresholds must satisfy 0 <= t1 < t2 <= 1 (got {0}, {1})")]
    InvalidThresholds(f64, f64),
}

// ---------------------------------------------------------------------------
// Terrain curriculum

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainSlot {
    pub kind: TerrainKind,
    pub level: u8,
}

/// Promotes an environment whose robot travelled farther than half the tile
/// and demotes one that travelled less. Promotion at the top level keeps the
/// level and draws a new terrain family from `kinds`.
pub fn terrain_update<R: Rng + ?Sized>(
    slot: TerrainSlot,
    distance: f64,
    extent: f64,
    kinds: &[TerrainKind],
    rng: &mut R,
) -> TerrainSlot {
    let half = 0.5 * extent;
    if distance > half {
        if slot.level >= MAX_LEVEL {
            let kind = if kinds.is_empty() { slot.kind } else { kinds[rng.random_range(0..kinds.len())] };
            TerrainSlot { kind, level: MAX_LEVEL }
        } else {
            TerrainSlot { level: slot.level + 1, ..slot }
        }
    } else if distance < half {
        TerrainSlot { level: slot.level.saturating_sub(1), ..slot }
    } else {
        slot
    }
}

// ---------------------------------------------------------------------------
// Reward curriculum

/// Stage 0 tracks velocity only; stage 1 ramps the posture terms in
/// linearly; stage 2 applies the full reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardStage {
    pub stage: u8,
    /// Multiplier on the height and orientation reward weights.
    pub posture_weight: f64,
}

impl RewardStage {
    pub const FULL: RewardStage = RewardStage { stage: 2, posture_weight: 1.0 };
}

/// `t1` and `t2` are fractions of `total_updates`.
pub fn reward_stage(update: u64, total_updates: u64, t1: f64, t2: f64) -> Result<RewardStage, CurriculumError> {
    if !(0.0..=1.0).contains(&t1) || !(0.0..=1.0).contains(&t2) || t1 >= t2 {
        return Err(CurriculumError::InvalidThresholds(t1, t2));
    }
    let total = total_updates.max(1) as f64;
    let (a, b) = (t1 * total, t2 * total);
    let u = update as f64;
    Ok(if u < a {
        RewardStage { stage: 0, posture_weight: 0.0 }
    } else if u < b {
        RewardStage { stage: 1, posture_weight: (u - a) / (b - a) }
    } else {
        RewardStage::FULL
    })
}

// ---------------------------------------------------------------------------
// Command curriculum

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandGrid {
    pub vx: Range,
    pub vy: Range,
    pub wz: Range,
}

impl CommandGrid {
    pub fn width(&self) -> [f64; 3] {
        [self.vx[1] - self.vx[0], self.vy[1] - self.vy[0], self.wz[1] - self.wz[0]]
    }

    pub fn contains(&self, other: &CommandGrid) -> bool {
        let inside = |outer: Range, inner: Range| outer[0] <= inner[0] && inner[1] <= outer[1];
        inside(self.vx, other.vx) && inside(self.vy, other.vy) && inside(self.wz, other.wz)
    }

    /// Whether a command falls in the outermost band of any non-degenerate
    /// velocity channel.
    pub fn on_boundary(&self, cmd: &Command6D, band: f64) -> bool {
        let near = |r: Range, v: f64| r[1] > r[0] && (v <= r[0] + band || v >= r[1] - band);
        near(self.vx, cmd.vx) || near(self.vy, cmd.vy) || near(self.wz, cmd.wz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub enabled: bool,
    pub initial: CommandGrid,
    pub caps: CommandGrid,
    /// Expansion per trigger for vx/vy (m/s) and wz (rad/s).
    pub lin_step: f64,
    pub ang_step: f64,
    /// Fraction of the maximum tracking reward that triggers expansion.
    pub threshold: f64,
    /// Width of the boundary band used to select boundary samples.
    pub boundary_band: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            initial: CommandGrid { vx: [-0.5, 0.5], vy: [-0.3, 0.3], wz: [-0.5, 0.5] },
            caps: CommandGrid {
                vx: [-LIN_VEL_CAP, LIN_VEL_CAP],
                vy: [-LIN_VEL_CAP, LIN_VEL_CAP],
                wz: [-YAW_RATE_CAP, YAW_RATE_CAP],
            },
            lin_step: 0.1,
            ang_step: 0.1,
            threshold: 0.8,
            boundary_band: 0.1,
        }
    }
}

/// Expands the velocity ranges symmetrically when the mean velocity-tracking
/// reward on the boundary cells exceeds the threshold, capped at `caps`.
pub fn grid_update(boundary_reward: f64, grid: &CommandGrid, config: &GridConfig) -> CommandGrid {
    if !(boundary_reward > config.threshold) {
        return *grid;
    }
    let grow = |r: Range, cap: Range, step: f64| [(r[0] - step).max(cap[0]), (r[1] + step).min(cap[1])];
    CommandGrid {
        vx: grow(grid.vx, config.caps.vx, config.lin_step),
        vy: grow(grid.vy, config.caps.vy, config.lin_step),
        wz: grow(grid.wz, config.caps.wz, config.ang_step),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Normal posture commands, uniform velocity commands.
    Normal,
    /// Uniform posture and velocity commands (ablation).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSampling {
    pub mode: SamplingMode,
    /// When false, height, pitch and roll commands stay at zero.
    pub posture: bool,
    pub height_range: Range,
    pub pitch_std: f64,
    pub roll_std: f64,
    /// |mean| of the stair pitch distribution, rad.
    pub stair_pitch_mean: f64,
}

impl Default for CommandSampling {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Normal,
            posture: true,
            height_range: HEIGHT_RANGE,
            pitch_std: 0.25,
            roll_std: 0.25,
            stair_pitch_mean: 0.5,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn clipped_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64, clip: Range) -> f64 {
    let n = Normal::new(mean, std).expect("finite std");
    n.sample(rng).clamp(clip[0], clip[1])
}

pub fn sample_command<R: Rng + ?Sized>(
    kind: TerrainKind,
    grid: &CommandGrid,
    sampling: &CommandSampling,
    reference_height: f64,
    rng: &mut R,
) -> Command6D {
    let vx = uniform(rng, grid.vx);
    let vy = uniform(rng, grid.vy);
    let wz = uniform(rng, grid.wz);
    if !sampling.posture {
        return Command6D::new(vx, vy, wz, 0.0, 0.0, 0.0);
    }
    let h = uniform(rng, sampling.height_range).clamp(HEIGHT_RANGE[0], HEIGHT_RANGE[1]);
    let (pitch_clip, pitch_mean) = match kind {
        TerrainKind::StairsUp => ([-PITCH_LIMIT, 0.0], -sampling.stair_pitch_mean),
        TerrainKind::StairsDown => ([0.0, PITCH_LIMIT], sampling.stair_pitch_mean),
        _ => ([-PITCH_LIMIT, PITCH_LIMIT], 0.0),
    };
    let roll_clip = [-ROLL_LIMIT, ROLL_LIMIT];
    let (pitch, roll) = match sampling.mode {
        SamplingMode::Normal => (
            clipped_normal(rng, pitch_mean, sampling.pitch_std, pitch_clip),
            clipped_normal(rng, 0.0, sampling.roll_std, roll_clip),
        ),
        SamplingMode::Uniform => (uniform(rng, pitch_clip), uniform(rng, roll_clip)),
    };
    Command6D::new(vx, vy, wz, h - reference_height, pitch, roll)
}

// ---------------------------------------------------------------------------
// Aggregate state

/// Push-interval window before and after the grid reaches half its cap width.
pub const PUSH_INTERVAL_EARLY: Range = [15.0, 15.0];
pub const PUSH_INTERVAL_LATE: Range = [10.0, 15.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub terrain: Vec<TerrainSlot>,
    pub reward: RewardStage,
    pub grid: CommandGrid,
    pub push_interval: Range,
    pub updates: u64,
    boundary_reward_sum: f64,
    boundary_samples: u64,
}

impl CurriculumState {
    pub fn new(terrain: Vec<TerrainSlot>, grid: CommandGrid) -> Self {
        Self {
            terrain,
            reward: RewardStage { stage: 0, posture_weight: 0.0 },
            grid,
            push_interval: PUSH_INTERVAL_EARLY,
            updates: 0,
            boundary_reward_sum: 0.0,
            boundary_samples: 0,
        }
    }

    /// Records one step's velocity-tracking reward if its command lies on
    /// the grid boundary.
    pub fn record_tracking(&mut self, cmd: &Command6D, velocity_reward: f64, band: f64) {
        if self.grid.on_boundary(cmd, band) {
            self.boundary_reward_sum += velocity_reward;
            self.boundary_samples += 1;
        }
    }

    pub fn boundary_reward(&self) -> Option<f64> {
        (self.boundary_samples > 0).then(|| self.boundary_reward_sum / self.boundary_samples as f64)
    }

    /// End-of-update bookkeeping: grid expansion and push-interval shortening.
    pub fn finish_update(&mut self, config: &GridConfig) {
        if config.enabled {
            if let Some(r) = self.boundary_reward() {
                self.grid = grid_update(r, &self.grid, config);
            }
            let (w, cap) = (self.grid.width(), config.caps.width());
            if (0..3).all(|i| w[i] >= 0.5 * cap[i]) {
                self.push_interval = PUSH_INTERVAL_LATE;
            }
        }
        self.boundary_reward_sum = 0.0;
        self.boundary_samples = 0;
        self.updates += 1;
    }
}
