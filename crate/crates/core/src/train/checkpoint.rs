use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{stage_env_config, Agent, Trainer};
use crate::amp::{AmpError, Discriminator, ExpertDataset};
use crate::archive::{sha256_hex, Archive, ArchiveError};
use crate::config::TrainConfig;
use crate::curricula::CurriculumState;
use crate::dynamics::RobotModel;
use crate::env::{EnvContext, EnvState, LocoEnv};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp};
use crate::rl::{ActorCritic, HistoryBuffer, PpoLearner};

pub const CHECKPOINT_KIND: &str = "checkpoint";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("checkpoint metadata: {0}")]
    Meta(String),
    #[error("checkpoint does not match config: {0}")]
    Mismatch(String),
    #[error("config digest {got} differs from checkpoint digest {expected}")]
    Digest { expected: String, got: String },
    #[error("expert dataset: {0}")]
    Expert(#[from] AmpError),
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    update: u64,
    stage: u8,
    rng: ChaCha8Rng,
    curriculum: CurriculumState,
    envs: Vec<EnvState>,
    histories: Vec<HistoryBuffer>,
    adam_config: AdamConfig,
    adam_steps: [u64; 4],
    disc_adam: Option<(AdamConfig, u64)>,
    expert_path: Option<PathBuf>,
    expert_digest: Option<String>,
    policy_digest: String,
}

const GROUPS: [&str; 4] = ["encoder", "actor", "critic", "log_std"];

/// SHA-256 over the deployable policy parameters (encoder, actor, log-std).
pub fn policy_digest(p: &ActorCritic<f32>) -> String {
    let mut bytes = Vec::new();
    for v in p.encoder.params().iter().chain(p.actor.params()).chain(&p.log_std) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn dataset_digest(ds: &ExpertDataset) -> String {
    sha256_hex(&ds.to_archive().to_bytes())
}

pub(super) fn to_archive(t: &Trainer) -> Archive {
    let l = &t.learner;
    let meta = Meta {
        config: t.config.clone(),
        update: t.update,
        stage: t.stage,
        rng: t.rng.clone(),
        curriculum: t.curriculum.clone(),
        envs: t.agents.iter().map(|a| a.env.snapshot()).collect(),
        histories: t.agents.iter().map(|a| a.history.clone()).collect(),
        adam_config: l.adam[0].config,
        adam_steps: [l.adam[0].t, l.adam[1].t, l.adam[2].t, l.adam[3].t],
        disc_adam: t.disc.as_ref().map(|d| (d.adam.config, d.adam.t)),
        expert_path: t.expert_path.clone(),
        expert_digest: t.expert.as_ref().map(dataset_digest),
        policy_digest: policy_digest(&l.model),
    };
    let mut a = Archive::new(CHECKPOINT_KIND, &t.digest, serde_json::to_value(&meta).expect("meta serializes"));
    let m = &l.model;
    a.push("encoder", &[m.encoder.num_params()], m.encoder.params());
    a.push("actor", &[m.actor.num_params()], m.actor.params());
    a.push("critic", &[m.critic.num_params()], m.critic.params());
    a.push("log_std", &[m.log_std.len()], &m.log_std);
    for (g, st) in GROUPS.iter().zip(&l.adam) {
        a.push(&format!("adam.{g}.m"), &[st.m.len()], &st.m);
        a.push(&format!("adam.{g}.v"), &[st.v.len()], &st.v);
    }
    if let Some(d) = &t.disc {
        a.push("disc", &[d.net.num_params()], d.net.params());
        a.push("adam.disc.m", &[d.adam.m.len()], &d.adam.m);
        a.push("adam.disc.v", &[d.adam.v.len()], &d.adam.v);
    }
    a
}

fn mlp(a: &Archive, name: &str, sizes: &[usize], act: Activation) -> Result<Mlp<f32>, CheckpointError> {
    let (p, _) = a.get::<f32>(name)?;
    Mlp::from_params(sizes, act, p).map_err(|e| CheckpointError::Mismatch(format!("{name}: {e}")))
}

fn meta(a: &Archive) -> Result<Meta, CheckpointError> {
    a.expect_kind(CHECKPOINT_KIND)?;
    serde_json::from_value(a.header.meta.clone()).map_err(|e| CheckpointError::Meta(e.to_string()))
}

fn policy_from(a: &Archive, config: &TrainConfig) -> Result<ActorCritic<f32>, CheckpointError> {
    let n = &config.network;
    let (log_std, _) = a.get::<f32>("log_std")?;
    if log_std.len() != crate::env::ACTION_DIM {
        return Err(CheckpointError::Mismatch("log_std width".into()));
    }
    Ok(ActorCritic {
        config: n.clone(),
        encoder: mlp(a, "encoder", &n.encoder_sizes(), n.activation)?,
        actor: mlp(a, "actor", &n.actor_sizes(), n.activation)?,
        critic: mlp(a, "critic", &n.critic_sizes(), n.activation)?,
        log_std,
    })
}

/// A policy restored for evaluation or serving.
pub struct LoadedPolicy {
    pub policy: ActorCritic<f32>,
    pub config: TrainConfig,
    pub config_digest: String,
    pub update: u64,
    pub stage: u8,
}

pub fn load_policy(path: &Path) -> Result<LoadedPolicy, CheckpointError> {
    let a = Archive::load(path)?;
    let m = meta(&a)?;
    let policy = policy_from(&a, &m.config)?;
    Ok(LoadedPolicy { policy, config: m.config, config_digest: a.header.config_digest.clone(), update: m.update, stage: m.stage })
}

pub(super) fn load_trainer(path: &Path, config: TrainConfig) -> Result<Trainer, super::TrainError> {
    config.validate()?;
    let a = Archive::load(path).map_err(CheckpointError::from)?;
    let m = meta(&a)?;
    let digest = config.digest();
    if a.header.config_digest != digest {
        return Err(CheckpointError::Digest { expected: a.header.config_digest.clone(), got: digest }.into());
    }
    let model = policy_from(&a, &config)?;
    let mut learner = PpoLearner::new(model, m.adam_config);
    for (i, g) in GROUPS.iter().enumerate() {
        let st = &mut learner.adam[i];
        st.m = a.get::<f64>(&format!("adam.{g}.m")).map_err(CheckpointError::from)?.0;
        st.v = a.get::<f64>(&format!("adam.{g}.v")).map_err(CheckpointError::from)?.0;
        st.t = m.adam_steps[i];
    }
    let stage_cfg = if m.stage == 1 { &config.stage1 } else { &config.stage2 };
    let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: stage_env_config(&config.env, stage_cfg) });
    if m.envs.len() != config.num_envs || m.histories.len() != config.num_envs {
        return Err(CheckpointError::Mismatch("environment count".into()).into());
    }
    let agents = m
        .envs
        .into_iter()
        .zip(m.histories)
        .map(|(s, history)| Agent { env: LocoEnv::from_state(Arc::clone(&ctx), s), history })
        .collect();
    let disc = match m.disc_adam {
        Some((adam_cfg, steps)) => {
            let sizes = [vec![crate::amp::AMP_PAIR_DIM], config.amp.hidden.clone(), vec![1]].concat();
            let net = mlp(&a, "disc", &sizes, Activation::Elu)?;
            let mut adam = AdamState::new(net.num_params(), adam_cfg);
            adam.m = a.get::<f64>("adam.disc.m").map_err(CheckpointError::from)?.0;
            adam.v = a.get::<f64>("adam.disc.v").map_err(CheckpointError::from)?.0;
            adam.t = steps;
            Some(Discriminator { net, adam })
        }
        None => None,
    };
    let expert = match (&m.expert_path, &m.expert_digest) {
        (Some(p), Some(d)) => {
            let ds = ExpertDataset::load(p).map_err(CheckpointError::from)?;
            if &dataset_digest(&ds) != d {
                return Err(CheckpointError::Mismatch(format!("expert dataset {} changed since the checkpoint", p.display())).into());
            }
            Some(ds)
        }
        _ => None,
    };
    Ok(Trainer {
        config,
        digest,
        stage: m.stage,
        ctx,
        agents,
        learner,
        disc,
        expert,
        expert_path: m.expert_path,
        curriculum: m.curriculum,
        rng: m.rng,
        update: m.update,
    })
}
