//! Training driver: vectorised rollouts, PPO and discriminator updates,
//! curricula, expert collection and resumable checkpoints.

mod agent;
mod checkpoint;
mod expert;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use agent::{command_matrix, history_matrix, mean_actions, Agent};
pub use checkpoint::{load_policy, policy_digest, CheckpointError, LoadedPolicy, CHECKPOINT_KIND};
pub use expert::collect_expert_dataset;

use crate::amp::{style_reward, AmpError, AmpMetrics, Discriminator, ExpertDataset, AMP_PAIR_DIM, AMP_STATE_DIM};
use crate::config::{ConfigError, StageConfig, TrainConfig};
use crate::curricula::{reward_stage, terrain_update, CommandGrid, CurriculumState, RewardStage, TerrainSlot};
use crate::dynamics::RobotModel;
use crate::env::{EnvConfig, EnvContext, EpisodeSpec, TaskRewards, ACTION_DIM};
use crate::nn::{gaussian_log_prob, gaussian_policy, AdamConfig};
use crate::rl::{gae, normalize_advantages, ppo_update, ActorCritic, PolicyInputs, PpoLearner, RlError, UpdateMetrics, CMD_DIM, CRITIC_DIM};
use crate::terrain::TILE_SIZE;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Amp(#[from] AmpError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    /// Number of completed updates including this one.
    pub update: u64,
    pub stage: u8,
    /// Mean per-step reward including style, scaled by the control period.
    pub mean_reward: f64,
    /// Mean per-step task reward components (unweighted, each in [0, 1]).
    pub task: TaskRewards,
    pub style: Option<f64>,
    pub episodes: usize,
    pub mean_episode_length: Option<f64>,
    pub timeouts: usize,
    pub ppo: UpdateMetrics,
    pub amp: Option<AmpMetrics>,
    pub reward_stage: RewardStage,
    pub grid: CommandGrid,
    pub mean_terrain_level: f64,
    pub push_interval: [f64; 2],
}

/// Environment configuration for a stage.
pub fn stage_env_config(base: &EnvConfig, stage: &StageConfig) -> EnvConfig {
    let mut cfg = base.clone();
    cfg.rewards.feet_air_time = stage.feet_air_time;
    cfg
}

struct Rollout {
    inputs: PolicyInputs<f32>,
    log_prob: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    amp_pairs: Array2<f64>,
}

pub struct Trainer {
    config: TrainConfig,
    digest: String,
    stage: u8,
    ctx: Arc<EnvContext>,
    agents: Vec<Agent>,
    learner: PpoLearner<f32>,
    disc: Option<Discriminator<f32>>,
    expert: Option<ExpertDataset>,
    expert_path: Option<PathBuf>,
    curriculum: CurriculumState,
    rng: ChaCha8Rng,
    update: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = ActorCritic::<f32>::new(config.network.clone(), &mut rng);
        let learner = PpoLearner::new(model, AdamConfig { lr: config.ppo.learning_rate, ..Default::default() });
        let stage_cfg = config.stage1.clone();
        let curriculum = CurriculumState::new(Self::initial_slots(&stage_cfg, config.num_envs), config.curriculum.grid.initial);
        let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: stage_env_config(&config.env, &stage_cfg) });
        let mut t = Self {
            digest: config.digest(),
            stage: 1,
            ctx,
            agents: Vec::new(),
            learner,
            disc: None,
            expert: None,
            expert_path: None,
            curriculum,
            rng,
            update: 0,
            config,
        };
        t.spawn_agents();
        Ok(t)
    }

    fn initial_slots(stage: &StageConfig, n: usize) -> Vec<TerrainSlot> {
        (0..n).map(|e| TerrainSlot { kind: stage.terrains[e % stage.terrains.len()], level: stage.initial_level }).collect()
    }

    fn spawn_agents(&mut self) {
        let h = self.config.network.history_len;
        self.agents = (0..self.config.num_envs)
            .map(|e| {
                let seed = self.rng.next_u64();
                Agent::new(Arc::clone(&self.ctx), seed, self.episode_spec(e), h)
            })
            .collect();
    }

    fn episode_spec(&self, e: usize) -> EpisodeSpec {
        EpisodeSpec { slot: self.curriculum.terrain[e], grid: self.curriculum.grid, push_interval: self.curriculum.push_interval }
    }

    /// Restores a trainer from a checkpoint written with the same config.
    pub fn load(path: &Path, config: TrainConfig) -> Result<Self, TrainError> {
        checkpoint::load_trainer(path, config)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), TrainError> {
        checkpoint::to_archive(self).save(path).map_err(CheckpointError::from)?;
        Ok(())
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn updates_done(&self) -> u64 {
        self.update
    }

    pub fn stage(&self) -> u8 {
        self.stage
    }

    pub fn policy(&self) -> &ActorCritic<f32> {
        &self.learner.model
    }

    pub fn learner(&self) -> &PpoLearner<f32> {
        &self.learner
    }

    pub fn curriculum(&self) -> &CurriculumState {
        &self.curriculum
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.config.total_updates()
    }

    fn stage_config(&self) -> &StageConfig {
        if self.stage == 1 {
            &self.config.stage1
        } else {
            &self.config.stage2
        }
    }

    /// True when stage 1 is complete and stage 2 still has to begin.
    pub fn needs_stage2(&self) -> bool {
        self.stage == 1 && self.update >= self.config.stage1.updates && self.config.stage2.updates > 0
    }

    /// Switches to stage 2: all configured terrains, the stage-2 reward set
    /// and, if enabled, the discriminator trained on `expert`.
    pub fn enter_stage2(&mut self, expert: Option<(ExpertDataset, PathBuf)>) -> Result<(), TrainError> {
        let stage2 = self.config.stage2.clone();
        if stage2.amp && expert.is_none() {
            return Err(ConfigError::Invalid("stage2 uses AMP but no expert dataset was provided; run `quadpose collect-amp` first".into()).into());
        }
        self.stage = 2;
        self.ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: stage_env_config(&self.config.env, &stage2) });
        self.curriculum.terrain = Self::initial_slots(&stage2, self.config.num_envs);
        if stage2.amp {
            self.disc = Some(Discriminator::new(&self.config.amp, &mut self.rng));
        }
        if let Some((ds, path)) = expert {
            self.expert = Some(ds);
            self.expert_path = Some(path);
        }
        self.spawn_agents();
        Ok(())
    }

    fn posture_stage(&self) -> RewardStage {
        let c = &self.config.curriculum;
        if !c.reward_curriculum {
            return RewardStage::FULL;
        }
        reward_stage(self.update, self.config.total_updates(), c.reward_t1, c.reward_t2).unwrap_or(RewardStage::FULL)
    }

    fn collect(&mut self, stats: &mut StepStats) -> Rollout {
        let steps = self.config.ppo.steps_per_env;
        let e_n = self.agents.len();
        let n = steps * e_n;
        let hist_dim = self.config.network.history_dim();
        let gamma = self.config.ppo.gamma;
        let band = self.config.curriculum.grid.boundary_band;
        let model = &self.learner.model;
        let log_std = model.log_std_f64();

        let mut history = Array2::<f32>::zeros((n, hist_dim));
        let mut command = Array2::<f32>::zeros((n, CMD_DIM));
        let mut critic = Array2::<f32>::zeros((n, CRITIC_DIM));
        let mut actions = Array2::<f32>::zeros((n, ACTION_DIM));
        let mut log_prob = vec![0.0; n];
        let mut values = vec![0.0; n];
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let mut amp_pairs = Array2::<f64>::zeros((n, AMP_PAIR_DIM));

        for t in 0..steps {
            let rows = t * e_n..(t + 1) * e_n;
            let hist = history_matrix(self.agents.iter().map(|a| &a.history), hist_dim);
            let cmds: Vec<_> = self.agents.iter().map(|a| a.env.command()).collect();
            let cmd_m = command_matrix(&cmds);
            let crit = Array2::from_shape_fn((e_n, CRITIC_DIM), |(i, j)| self.agents[i].critic_row()[j] as f32);
            let mu = model.action_mean(hist.view(), cmd_m.view()).expect("input widths");
            let v = model.values(crit.view()).expect("input widths");

            let mut acts = Vec::with_capacity(e_n);
            for e in 0..e_n {
                let m: Vec<f64> = mu.row(e).iter().map(|x| f64::from(*x)).collect();
                let (a, _) = gaussian_policy(&m, &log_std, false, &mut self.rng);
                // Stored actions are f32; the log-probability must match them.
                let a: Vec<f64> = a.iter().map(|x| f64::from(*x as f32)).collect();
                let row = rows.start + e;
                log_prob[row] = gaussian_log_prob(&m, &log_std, &a);
                values[row] = f64::from(v[e]);
                for j in 0..ACTION_DIM {
                    actions[[row, j]] = a[j] as f32;
                }
                acts.push(a);
            }
            history.slice_mut(ndarray::s![rows.clone(), ..]).assign(&hist);
            command.slice_mut(ndarray::s![rows.clone(), ..]).assign(&cmd_m);
            critic.slice_mut(ndarray::s![rows.clone(), ..]).assign(&crit);

            let outcomes: Vec<_> = self.agents.par_iter_mut().zip(acts.par_iter()).map(|(ag, a)| ag.env.step(a)).collect();

            let mut timeouts = Vec::new();
            for (e, out) in outcomes.iter().enumerate() {
                let row = rows.start + e;
                rewards[row] = out.reward;
                dones[row] = out.info.done();
                amp_pairs.row_mut(row).as_slice_mut().unwrap()[..AMP_STATE_DIM].copy_from_slice(&out.amp_pair.0);
                amp_pairs.row_mut(row).as_slice_mut().unwrap()[AMP_STATE_DIM..].copy_from_slice(&out.amp_pair.1);
                self.curriculum.record_tracking(&cmds[e], out.task.v, band);
                stats.add_step(out.reward, &out.task);
                if out.info.timeout {
                    timeouts.push(e);
                }
            }
            if !timeouts.is_empty() {
                let rows_t = Array2::from_shape_fn((timeouts.len(), CRITIC_DIM), |(i, j)| self.agents[timeouts[i]].critic_row()[j] as f32);
                let vt = model.values(rows_t.view()).expect("input widths");
                for (i, &e) in timeouts.iter().enumerate() {
                    rewards[rows.start + e] += gamma * f64::from(vt[i]);
                }
            }
            for (e, out) in outcomes.iter().enumerate() {
                if let Some(summary) = out.summary {
                    stats.add_episode(summary.steps, summary.info.timeout);
                    if self.stage_config().terrain_curriculum {
                        let kinds = self.stage_config().terrains.clone();
                        self.curriculum.terrain[e] = terrain_update(self.curriculum.terrain[e], summary.distance, TILE_SIZE, &kinds, &mut self.rng);
                    }
                    let spec = self.episode_spec(e);
                    self.agents[e].reset(spec);
                } else {
                    self.agents[e].observe(&acts[e]);
                }
            }
        }
        Rollout { inputs: PolicyInputs { history, command, critic, actions }, log_prob, values, rewards, dones, amp_pairs }
    }

    /// Collects one rollout and applies one PPO (and discriminator) update.
    pub fn train_update(&mut self) -> Result<UpdateRecord, TrainError> {
        let stage_now = self.posture_stage();
        self.curriculum.reward = stage_now;
        for a in &mut self.agents {
            a.env.set_posture_weight(stage_now.posture_weight);
        }
        let mut stats = StepStats::default();
        let mut ro = self.collect(&mut stats);
        let e_n = self.agents.len();
        let n = ro.rewards.len();
        let dt = self.ctx.config.control_dt();

        let mut style_mean = None;
        let mut normalized_policy = None;
        if let (Some(disc), Some(ds)) = (&self.disc, &self.expert) {
            let z = ds.normalize(ro.amp_pairs.view()).mapv(|v| v as f32);
            let d = disc.predict(z.view())?;
            let w = self.ctx.config.rewards.w_style;
            let mut sum = 0.0;
            for (r, dv) in ro.rewards.iter_mut().zip(&d) {
                let s = style_reward(*dv);
                sum += s;
                *r += w * s * dt;
            }
            style_mean = Some(sum / n as f64);
            normalized_policy = Some(z);
        }

        let last_crit = Array2::from_shape_fn((e_n, CRITIC_DIM), |(i, j)| self.agents[i].critic_row()[j] as f32);
        let last_values = self.learner.model.values(last_crit.view()).expect("input widths");
        let cfg = self.config.ppo.clone();
        let mut adv = vec![0.0; n];
        let mut ret = vec![0.0; n];
        for e in 0..e_n {
            let col = |v: &[f64]| (0..cfg.steps_per_env).map(|t| v[t * e_n + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..cfg.steps_per_env).map(|t| ro.dones[t * e_n + e]).collect();
            let (a, r) = gae(&col(&ro.rewards), &col(&ro.values), &d, f64::from(last_values[e]), cfg.gamma, cfg.lambda)?;
            for t in 0..cfg.steps_per_env {
                adv[t * e_n + e] = a[t];
                ret[t * e_n + e] = r[t];
            }
        }
        normalize_advantages(&mut adv);
        let ppo = ppo_update(&mut self.learner, &ro.inputs, n, &ro.log_prob, &adv, &ret, &cfg, &mut self.rng)?;

        let mut amp_metrics = None;
        if let (Some(disc), Some(ds), Some(z)) = (&mut self.disc, &self.expert, &normalized_policy) {
            let b = self.config.amp.batch_size;
            for _ in 0..self.config.amp.updates_per_iteration {
                let expert = ds.sample(b, &mut self.rng).mapv(|v| v as f32);
                let idx: Vec<usize> = (0..b).map(|_| (self.rng.next_u64() % n as u64) as usize).collect();
                let policy = z.select(Axis(0), &idx);
                amp_metrics = Some(disc.update(expert.view(), policy.view(), self.config.amp.grad_penalty)?);
            }
        }
        ro.amp_pairs = Array2::zeros((0, 0));

        self.curriculum.finish_update(&self.config.curriculum.grid);
        self.update += 1;
        let levels: f64 = self.curriculum.terrain.iter().map(|s| f64::from(s.level)).sum();
        Ok(UpdateRecord {
            update: self.update,
            stage: self.stage,
            mean_reward: ro.rewards.iter().sum::<f64>() / n as f64,
            task: stats.mean_task(),
            style: style_mean,
            episodes: stats.episodes,
            mean_episode_length: (stats.episodes > 0).then(|| stats.episode_steps as f64 / stats.episodes as f64),
            timeouts: stats.timeouts,
            ppo,
            amp: amp_metrics,
            reward_stage: stage_now,
            grid: self.curriculum.grid,
            mean_terrain_level: levels / self.curriculum.terrain.len().max(1) as f64,
            push_interval: self.curriculum.push_interval,
        })
    }
}

#[derive(Default)]
struct StepStats {
    steps: usize,
    reward: f64,
    task: TaskRewards,
    episodes: usize,
    episode_steps: usize,
    timeouts: usize,
}

impl StepStats {
    fn add_step(&mut self, reward: f64, task: &TaskRewards) {
        self.steps += 1;
        self.reward += reward;
        self.task.v += task.v;
        self.task.w += task.w;
        self.task.h += task.h;
        self.task.theta += task.theta;
    }

    fn add_episode(&mut self, steps: usize, timeout: bool) {
        self.episodes += 1;
        self.episode_steps += steps;
        self.timeouts += usize::from(timeout);
    }

    fn mean_task(&self) -> TaskRewards {
        let k = 1.0 / self.steps.max(1) as f64;
        TaskRewards { v: self.task.v * k, w: self.task.w * k, h: self.task.h * k, theta: self.task.theta * k }
    }
}

/// Summary of a finished [`run_training`] call.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub updates: u64,
    pub checkpoints: Vec<PathBuf>,
    pub last_record: Option<UpdateRecord>,
}

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const EXPERT_FILE: &str = "expert.qpck";
pub const LATEST_CHECKPOINT: &str = "latest.qpck";

pub fn checkpoint_path(out_dir: &Path, update: u64) -> PathBuf {
    out_dir.join(format!("checkpoint_{update:06}.qpck"))
}

/// Runs (or resumes) training until every configured update is done,
/// writing checkpoints and one metrics line per update into `out_dir`.
/// `max_updates` stops early after that many updates in this call.
pub fn run_training(
    config: TrainConfig,
    out_dir: &Path,
    resume: Option<&Path>,
    max_updates: Option<u64>,
    mut on_update: impl FnMut(&UpdateRecord),
) -> Result<RunSummary, TrainError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut trainer = match resume {
        Some(p) => Trainer::load(p, config)?,
        None => Trainer::new(config)?,
    };
    let metrics_path = out_dir.join(METRICS_FILE);
    let mut metrics = OpenOptions::new().create(true).append(true).open(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut summary = RunSummary { updates: 0, checkpoints: Vec::new(), last_record: None };
    while !trainer.is_finished() && max_updates.is_none_or(|m| summary.updates < m) {
        if trainer.needs_stage2() {
            let expert = obtain_expert(&trainer, out_dir)?;
            trainer.enter_stage2(expert)?;
        }
        let record = trainer.train_update()?;
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(metrics, "{line}").map_err(io_err(&metrics_path))?;
        on_update(&record);
        summary.updates += 1;
        let u = trainer.updates_done();
        let last = trainer.is_finished() || max_updates.is_some_and(|m| summary.updates >= m);
        if u % trainer.config().checkpoint_interval == 0 || last {
            let path = checkpoint_path(out_dir, u);
            let archive = checkpoint::to_archive(&trainer);
            archive.save(&path).map_err(CheckpointError::from)?;
            archive.save(&out_dir.join(LATEST_CHECKPOINT)).map_err(CheckpointError::from)?;
            summary.checkpoints.push(path);
        }
        summary.last_record = Some(record);
    }
    Ok(summary)
}

fn obtain_expert(trainer: &Trainer, out_dir: &Path) -> Result<Option<(ExpertDataset, PathBuf)>, TrainError> {
    let cfg = trainer.config();
    if !cfg.stage2.amp {
        return Ok(None);
    }
    if let Some(p) = &cfg.expert.path {
        return Ok(Some((ExpertDataset::load(p)?, p.clone())));
    }
    let digest = policy_digest(trainer.policy());
    let ds = collect_expert_dataset(trainer.policy(), cfg, cfg.amp.expert_pairs, cfg.seed ^ 0x5eed, &digest)?;
    let path = out_dir.join(EXPERT_FILE);
    ds.save(&path)?;
    Ok(Some((ds, path)))
}
