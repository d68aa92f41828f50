//! PPO with a history-encoder actor and an asymmetric critic.

mod actor_critic;
mod gae;
mod history;
mod loss;
mod update;

use serde::{Deserialize, Serialize};

pub use actor_critic::{gaussian_terms, ActorCritic, ActorForward, NetworkConfig, PolicyInputs, PpoLearner, CMD_DIM, CRITIC_DIM};
pub use gae::{gae, normalize_advantages};
pub use history::{HistoryBuffer, HISTORY_STEP_DIM};
pub use loss::{ppo_policy_loss, value_loss, PolicyLoss};
pub use update::{minibatch_loss, ppo_update, Evaluation, PolicyValue, UpdateMetrics};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RlError {
    #[error("trajectory length mismatch: {rewards} rewards, {values} values, {dones} dones")]
    LengthMismatch { rewards: usize, values: usize, dones: usize },
    #[error("{field} has {got} entries, expected {expected}")]
    BatchSize { field: &'static str, expected: usize, got: usize },
    #[error("non-finite loss; parameters restored")]
    NonFiniteLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// Control steps per environment per update.
    pub steps_per_env: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            epochs: 5,
            minibatches: 4,
            learning_rate: 3e-4,
            value_coef: 1.0,
            entropy_coef: 0.005,
            max_grad_norm: 1.0,
            steps_per_env: 24,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err("gamma and lambda must lie in [0, 1]".into());
        }
        if !(self.clip_eps > 0.0) || !(self.learning_rate > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err("clip_eps, learning_rate and max_grad_norm must be positive".into());
        }
        if self.epochs == 0 || self.minibatches == 0 || self.steps_per_env == 0 {
            return Err("epochs, minibatches and steps_per_env must be positive".into());
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err("loss coefficients must be non-negative".into());
        }
        Ok(())
    }
}
