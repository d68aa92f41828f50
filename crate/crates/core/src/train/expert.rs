use std::sync::Arc;

use ndarray::Array2;

use super::{mean_actions, stage_env_config, Agent, TrainError};
use crate::amp::{check_expert_gate, AmpError, DatasetMeta, ExpertDataset, AMP_PAIR_DIM, AMP_STATE_DIM};
use crate::config::TrainConfig;
use crate::curricula::TerrainSlot;
use crate::dynamics::RobotModel;
use crate::env::{EnvContext, EpisodeSpec};
use crate::rl::ActorCritic;

/// Rolls out the stage-1 policy (mean actions) on the stage-1 terrains and
/// records `n_pairs` consecutive-step feature pairs. Rows from one
/// environment are contiguous and in time order.
///
/// Fails with `PolicyTooWeak` when the mean velocity-tracking reward over
/// the collected steps is below the configured gate.
pub fn collect_expert_dataset(
    policy: &ActorCritic<f32>,
    config: &TrainConfig,
    n_pairs: usize,
    seed: u64,
    policy_digest: &str,
) -> Result<ExpertDataset, TrainError> {
    if n_pairs == 0 {
        return Err(AmpError::EmptyDataset.into());
    }
    let stage = &config.stage1;
    let env_cfg = stage_env_config(&config.env, stage);
    let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: env_cfg });
    let n_envs = config.num_envs.min(n_pairs);
    let spec = |e: usize| EpisodeSpec {
        slot: TerrainSlot { kind: stage.terrains[e % stage.terrains.len()], level: stage.initial_level },
        grid: config.curriculum.grid.initial,
        push_interval: crate::curricula::PUSH_INTERVAL_EARLY,
    };
    let mut agents: Vec<Agent> = (0..n_envs)
        .map(|e| Agent::new(Arc::clone(&ctx), seed.wrapping_add(e as u64), spec(e), config.network.history_len))
        .collect();
    let steps = n_pairs.div_ceil(n_envs);
    let mut per_env: Vec<Vec<f64>> = vec![Vec::with_capacity(steps * AMP_PAIR_DIM); n_envs];
    let mut rv = 0.0;
    for _ in 0..steps {
        let refs: Vec<&Agent> = agents.iter().collect();
        let acts = mean_actions(policy, &refs);
        for (e, ag) in agents.iter_mut().enumerate() {
            let out = ag.env.step(&acts[e]);
            rv += out.task.v;
            per_env[e].extend_from_slice(&out.amp_pair.0);
            per_env[e].extend_from_slice(&out.amp_pair.1);
            if out.info.done() {
                ag.reset(spec(e));
            } else {
                ag.observe(&acts[e]);
            }
        }
    }
    let score = rv / (steps * n_envs) as f64;
    check_expert_gate(score, config.amp.expert_gate)?;
    let mut data: Vec<f64> = per_env.concat();
    data.truncate(n_pairs * AMP_PAIR_DIM);
    debug_assert_eq!(AMP_PAIR_DIM, 2 * AMP_STATE_DIM);
    let pairs = Array2::from_shape_vec((n_pairs, AMP_PAIR_DIM), data).expect("row count");
    let meta = DatasetMeta { policy_digest: policy_digest.to_string(), seed, gate_score: score };
    Ok(ExpertDataset::new(pairs, meta)?)
}
