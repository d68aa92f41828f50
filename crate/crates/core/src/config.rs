//! Training configuration: one TOML document covering every tunable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::amp::AmpConfig;
use crate::archive::sha256_hex;
use crate::curricula::GridConfig;
use crate::env::EnvConfig;
use crate::rl::{NetworkConfig, PpoConfig};
use crate::terrain::{TerrainKind, MAX_LEVEL};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub updates: u64,
    pub terrains: Vec<TerrainKind>,
    pub initial_level: u8,
    pub terrain_curriculum: bool,
    /// Adds the discriminator style reward.
    pub amp: bool,
    /// Weight of the swing-time gait bonus.
    pub feet_air_time: f64,
}

impl StageConfig {
    pub fn stage1() -> Self {
        Self {
            updates: 1500,
            terrains: vec![TerrainKind::RoughFlat],
            initial_level: 0,
            terrain_curriculum: false,
            amp: false,
            feet_air_time: 1.0,
        }
    }

    pub fn stage2() -> Self {
        Self {
            updates: 1500,
            terrains: TerrainKind::ALL.to_vec(),
            initial_level: 0,
            terrain_curriculum: true,
            amp: true,
            feet_air_time: 0.0,
        }
    }
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertSource {
    /// Collect expert pairs from the stage-1 policy when stage 2 begins.
    pub collect: bool,
    /// Pre-collected dataset; takes precedence over collection.
    pub path: Option<PathBuf>,
}

impl Default for ExpertSource {
    fn default() -> Self {
        Self { collect: true, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub reward_curriculum: bool,
    /// Fractions of all updates at which posture terms start and finish
    /// ramping in.
    pub reward_t1: f64,
    pub reward_t2: f64,
    pub grid: GridConfig,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self { reward_curriculum: true, reward_t1: 0.15, reward_t2: 0.4, grid: GridConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub num_envs: usize,
    /// Updates between checkpoints (a final checkpoint is always written).
    pub checkpoint_interval: u64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub expert: ExpertSource,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub amp: AmpConfig,
    pub curriculum: CurriculumConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            num_envs: 64,
            checkpoint_interval: 100,
            stage1: StageConfig::stage1(),
            stage2: StageConfig::stage2(),
            expert: ExpertSource::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
            amp: AmpConfig::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn total_updates(&self) -> u64 {
        self.stage1.updates + self.stage2.updates
    }

    /// SHA-256 over the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.num_envs == 0 {
            return bad("num_envs must be at least 1".into());
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be at least 1".into());
        }
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if s.updates > 0 && s.terrains.is_empty() {
                return bad(format!("{name}.terrains must not be empty"));
            }
            if s.initial_level > MAX_LEVEL {
                return bad(format!("{name}.initial_level must be at most {MAX_LEVEL}"));
            }
            if !(s.feet_air_time >= 0.0) {
                return bad(format!("{name}.feet_air_time must be non-negative"));
            }
        }
        if self.stage1.amp {
            return bad("stage1 cannot use AMP: its policy generates the expert data".into());
        }
        if self.stage2.updates > 0 && self.stage2.amp && !self.expert.collect && self.expert.path.is_none() {
            return bad("stage2 uses AMP but no expert dataset is available: run `quadpose collect-amp` and set expert.path, or set expert.collect = true".into());
        }
        let c = &self.curriculum;
        if !(0.0 <= c.reward_t1 && c.reward_t1 < c.reward_t2 && c.reward_t2 <= 1.0) {
            return bad(format!("curriculum thresholds must satisfy 0 <= reward_t1 < reward_t2 <= 1 (got {}, {})", c.reward_t1, c.reward_t2));
        }
        if !c.grid.caps.contains(&c.grid.initial) {
            return bad("curriculum.grid.initial must lie within curriculum.grid.caps".into());
        }
        let fail = |e: String| ConfigError::Invalid(e);
        self.env.validate().map_err(fail)?;
        self.ppo.validate().map_err(fail)?;
        self.network.validate().map_err(fail)?;
        self.amp.validate().map_err(fail)?;
        Ok(())
    }
}
