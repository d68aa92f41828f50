use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::command::Command6D;
use super::observation::{add_noise, build_observation, build_privileged, NoiseBands, PRIVILEGED_DIM, PROPRIO_DIM};
use super::pd::{pd_torque, PdGains};
use super::reward::{task_reward, total_reward, RegTerms, RewardWeights, TaskRewards, Tracking};
use crate::amp::{amp_features, AMP_STATE_DIM};
use crate::curricula::{sample_command, CommandGrid, CommandSampling, TerrainSlot};
use crate::dynamics::{
    self, leg_frames, resting_state, DomainParams, RobotModel, RobotState, NUM_JOINTS, NUM_LEGS, PHYSICS_DT,
};
use crate::randomization::{sample_domain_params, schedule_pushes, DomainRanges, PushEvent, Range};
use crate::terrain::{generate_terrain, TerrainMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    /// Physics steps per control step.
    pub decimation: usize,
    pub episode_length_s: f64,
    /// Joint-target offset per unit action, rad.
    pub action_scale: f64,
    pub action_clip: f64,
    pub gains: PdGains,
    pub rewards: RewardWeights,
    pub observation_noise: bool,
    pub noise: NoiseBands,
    pub resample_interval_s: f64,
    pub randomize_dynamics: bool,
    pub domain: DomainRanges,
    pub pushes: bool,
    pub max_push: f64,
    /// Termination when |pitch − cmd| or |roll − cmd| exceeds this, rad.
    pub max_tilt_error: f64,
    pub min_height: f64,
    pub sampling: CommandSampling,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            decimation: 4,
            episode_length_s: 20.0,
            action_scale: 0.25,
            action_clip: 4.0,
            gains: PdGains::default(),
            rewards: RewardWeights::default(),
            observation_noise: true,
            noise: NoiseBands::default(),
            resample_interval_s: 5.0,
            randomize_dynamics: true,
            domain: DomainRanges::default(),
            pushes: true,
            max_push: dynamics::MAX_PUSH,
            max_tilt_error: 1.2,
            min_height: 0.05,
            sampling: CommandSampling::default(),
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        PHYSICS_DT * self.decimation as f64
    }

    pub fn max_episode_steps(&self) -> usize {
        (self.episode_length_s / self.control_dt()).round() as usize
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.decimation == 0 {
            return Err("env.decimation must be at least 1".into());
        }
        if !(self.episode_length_s > 0.0) || !(self.resample_interval_s > 0.0) {
            return Err("env episode length and resample interval must be positive".into());
        }
        if !(self.action_scale > 0.0) || !(self.action_clip > 0.0) {
            return Err("env action scale and clip must be positive".into());
        }
        if !(self.gains.kp > 0.0) || !(self.gains.kd >= 0.0) {
            return Err("env PD gains must be positive".into());
        }
        self.rewards.validate()?;
        self.domain.validate()
    }
}

/// Immutable data shared by every environment instance.
#[derive(Debug)]
pub struct EnvContext {
    pub model: RobotModel,
    pub config: EnvConfig,
}

/// Curriculum inputs for one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSpec {
    pub slot: TerrainSlot,
    pub grid: CommandGrid,
    pub push_interval: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepInfo {
    pub timeout: bool,
    pub collision: bool,
    pub tilt: bool,
    pub low_height: bool,
    /// The simulator produced a non-finite state.
    pub failure: bool,
    /// Non-foot contacts this step (penalized, not terminal).
    pub knee_contacts: u32,
}

impl StepInfo {
    pub fn done(&self) -> bool {
        self.timeout || self.terminal()
    }

    /// Ended by a failure condition (no bootstrapping).
    pub fn terminal(&self) -> bool {
        self.collision || self.tilt || self.low_height || self.failure
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub steps: usize,
    pub return_sum: f64,
    pub mean_task: TaskRewards,
    pub distance: f64,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Reward excluding the style term, scaled by the control period.
    pub reward: f64,
    pub task: TaskRewards,
    pub info: StepInfo,
    /// AMP features before and after the step.
    pub amp_pair: ([f64; AMP_STATE_DIM], [f64; AMP_STATE_DIM]),
    pub summary: Option<EpisodeSummary>,
}

/// Serializable dynamic state of one environment. The terrain map is
/// regenerated from `(slot, terrain_seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub rng: ChaCha8Rng,
    pub slot: TerrainSlot,
    pub terrain_seed: u64,
    pub grid: CommandGrid,
    pub params: DomainParams,
    pub robot: RobotState,
    pub cmd: Command6D,
    pub fixed_command: Option<Command6D>,
    pub last_action: [f64; NUM_JOINTS],
    pub prev_target: [f64; NUM_JOINTS],
    pub prev_joint_pos: [f64; NUM_JOINTS],
    pub obs: Vec<f64>,
    pub pushes: Vec<PushEvent>,
    pub next_push: usize,
    pub steps: usize,
    pub next_resample: f64,
    pub spawn_xy: [f64; 2],
    pub air_time: [f64; NUM_LEGS],
    pub posture_weight: f64,
    pub episode: EpisodeSummary,
}

pub struct LocoEnv {
    ctx: Arc<EnvContext>,
    terrain: TerrainMap,
    s: EnvState,
}

impl LocoEnv {
    /// A freshly reset environment.
    pub fn new(ctx: Arc<EnvContext>, seed: u64, spec: EpisodeSpec) -> Self {
        let model = &ctx.model;
        let robot = RobotState::standing(model, [0.0, 0.0], model.reference_height, 0.0);
        let s = EnvState {
            rng: ChaCha8Rng::seed_from_u64(seed),
            slot: spec.slot,
            terrain_seed: 0,
            grid: spec.grid,
            params: DomainParams::default(),
            prev_target: model.default_joint_pos,
            prev_joint_pos: robot.joint_pos,
            robot,
            cmd: Command6D::default(),
            fixed_command: None,
            last_action: [0.0; NUM_JOINTS],
            obs: vec![0.0; PROPRIO_DIM],
            pushes: Vec::new(),
            next_push: 0,
            steps: 0,
            next_resample: 0.0,
            spawn_xy: [0.0; 2],
            air_time: [0.0; NUM_LEGS],
            posture_weight: 1.0,
            episode: EpisodeSummary::default(),
        };
        let mut env = Self { ctx, terrain: TerrainMap::flat(1.0), s };
        env.reset(spec);
        env
    }

    pub fn from_state(ctx: Arc<EnvContext>, s: EnvState) -> Self {
        let terrain = generate_terrain(s.slot.kind, s.slot.level, s.terrain_seed);
        Self { ctx, terrain, s }
    }

    pub fn snapshot(&self) -> EnvState {
        self.s.clone()
    }

    pub fn context(&self) -> &Arc<EnvContext> {
        &self.ctx
    }

    pub fn robot(&self) -> &RobotState {
        &self.s.robot
    }

    pub fn terrain(&self) -> &TerrainMap {
        &self.terrain
    }

    pub fn params(&self) -> &DomainParams {
        &self.s.params
    }

    pub fn command(&self) -> Command6D {
        self.s.cmd
    }

    pub fn slot(&self) -> TerrainSlot {
        self.s.slot
    }

    pub fn steps(&self) -> usize {
        self.s.steps
    }

    /// Multiplier on the posture reward terms (reward curriculum).
    pub fn set_posture_weight(&mut self, w: f64) {
        self.s.posture_weight = w;
    }

    /// Overrides the command; the observation is refreshed immediately.
    pub fn set_command(&mut self, cmd: Command6D) {
        self.s.cmd = cmd;
        self.refresh_command_channels();
    }

    /// Pins the command for this and future episodes (evaluation, teleop).
    pub fn fix_command(&mut self, cmd: Option<Command6D>) {
        self.s.fixed_command = cmd;
        if let Some(c) = cmd {
            self.set_command(c);
        }
    }

    pub fn proprio(&self) -> &[f64] {
        &self.s.obs
    }

    pub fn privileged(&self) -> [f64; PRIVILEGED_DIM] {
        build_privileged(&self.s.robot, &self.terrain, &self.s.params, &self.ctx.model)
            .unwrap_or([0.0; PRIVILEGED_DIM])
    }

    pub fn amp_state(&self) -> [f64; AMP_STATE_DIM] {
        amp_features(&self.s.robot, &self.terrain, &self.ctx.model).unwrap_or([0.0; AMP_STATE_DIM])
    }

    pub fn tracking(&self) -> Tracking {
        Tracking::measure(&self.s.robot, &self.terrain, self.s.params.com_offset).unwrap_or_default()
    }

    pub fn distance_from_spawn(&self) -> f64 {
        let p = self.s.robot.base_pos;
        (p.x - self.s.spawn_xy[0]).hypot(p.y - self.s.spawn_xy[1])
    }

    pub fn reset(&mut self, spec: EpisodeSpec) {
        let ctx = Arc::clone(&self.ctx);
        let cfg = &ctx.config;
        let model = &ctx.model;
        let s = &mut self.s;
        s.slot = spec.slot;
        s.grid = spec.grid;
        s.terrain_seed = s.rng.next_u64();
        self.terrain = generate_terrain(spec.slot.kind, spec.slot.level, s.terrain_seed);
        let yaw = s.rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let centre = self.terrain.center();
        s.robot = resting_state(model, &self.terrain, centre, yaw).expect("spawn point lies on the tile");
        s.spawn_xy = centre;
        s.params = if cfg.randomize_dynamics { sample_domain_params(&mut s.rng, &cfg.domain) } else { DomainParams::default() };
        s.pushes = if cfg.pushes {
            schedule_pushes(&mut s.rng, cfg.episode_length_s, spec.push_interval, cfg.max_push)
        } else {
            Vec::new()
        };
        s.next_push = 0;
        s.steps = 0;
        s.last_action = [0.0; NUM_JOINTS];
        s.prev_target = model.default_joint_pos;
        s.prev_joint_pos = s.robot.joint_pos;
        s.air_time = [0.0; NUM_LEGS];
        s.episode = EpisodeSummary::default();
        s.cmd = match s.fixed_command {
            Some(c) => c,
            None => sample_command(s.slot.kind, &s.grid, &cfg.sampling, model.reference_height, &mut s.rng),
        };
        s.next_resample = cfg.resample_interval_s;
        self.observe();
    }

    fn observe(&mut self) {
        let ctx = &self.ctx;
        let s = &mut self.s;
        let mut o = build_observation(&s.robot, &s.cmd, &s.prev_joint_pos, &ctx.model);
        if ctx.config.observation_noise {
            add_noise(&mut o, &ctx.config.noise, &mut s.rng);
        }
        s.obs.clear();
        s.obs.extend_from_slice(&o);
    }

    fn refresh_command_channels(&mut self) {
        use super::observation::COMMAND;
        let c = self.s.cmd.to_array();
        self.s.obs[COMMAND..COMMAND + 6].copy_from_slice(&c);
    }

    /// Whether any trunk-box bottom corner or hip point is below the terrain.
    fn trunk_collision(&self) -> bool {
        let r = &self.s.robot;
        let m = &self.ctx.model;
        let [hx, hy, hz] = m.trunk_half_extents;
        let corners = [[hx, hy], [hx, -hy], [-hx, hy], [-hx, -hy]].map(|[x, y]| Vector3::new(x, y, -hz));
        let hips = m.hip_offsets.map(Vector3::from);
        corners.iter().chain(hips.iter()).any(|p| {
            let w = r.base_pos + r.base_quat * p;
            self.terrain.sample_height(w.x, w.y).map_or(true, |h| w.z < h)
        })
    }

    fn knee_contacts(&self) -> u32 {
        let r = &self.s.robot;
        leg_frames(&self.ctx.model, &r.joint_pos)
            .iter()
            .filter(|f| {
                let w = r.base_pos + r.base_quat * f.knee;
                self.terrain.sample_height(w.x, w.y).map_or(false, |h| w.z < h)
            })
            .count() as u32
    }

    /// Advances one control step. The caller resets the environment once
    /// `info.done()` is reported.
    pub fn step(&mut self, action: &[f64]) -> StepOutcome {
        assert_eq!(action.len(), NUM_JOINTS);
        let ctx = Arc::clone(&self.ctx);
        let cfg = &ctx.config;
        let model = &ctx.model;
        let amp_before = self.amp_state();

        let mut act = [0.0; NUM_JOINTS];
        let mut target = [0.0; NUM_JOINTS];
        for j in 0..NUM_JOINTS {
            act[j] = if action[j].is_finite() { action[j].clamp(-cfg.action_clip, cfg.action_clip) } else { 0.0 };
            target[j] = model.default_joint_pos[j] + cfg.action_scale * act[j];
        }

        let delay = self.s.params.action_delay;
        let prev_target = self.s.prev_target;
        let before = self.s.robot.joint_pos;
        let mut torque_sq = 0.0;
        let mut failure = false;
        for k in 0..cfg.decimation {
            let s = &mut self.s;
            while s.next_push < s.pushes.len() && s.pushes[s.next_push].time <= s.robot.time {
                s.robot = dynamics::apply_push(&s.robot, &s.pushes[s.next_push].delta());
                s.next_push += 1;
            }
            let frac = (((k + 1) as f64 * PHYSICS_DT - delay) / PHYSICS_DT).clamp(0.0, 1.0);
            let q_des: [f64; NUM_JOINTS] = std::array::from_fn(|j| prev_target[j] + frac * (target[j] - prev_target[j]));
            let tau = pd_torque(&q_des, &s.robot.joint_pos, &s.robot.joint_vel, cfg.gains, &s.params, model);
            torque_sq += tau.iter().map(|t| t * t).sum::<f64>();
            match dynamics::step(&s.robot, &tau, &self.terrain, model, &s.params, PHYSICS_DT) {
                Ok(next) => s.robot = next,
                Err(_) => {
                    failure = true;
                    break;
                }
            }
        }
        torque_sq /= cfg.decimation as f64;

        let dt = cfg.control_dt();
        let s = &mut self.s;
        s.prev_target = target;
        s.prev_joint_pos = before;
        s.steps += 1;

        let mut feet_air = 0.0;
        let moving = s.cmd.vx.hypot(s.cmd.vy) > 0.1;
        for leg in 0..NUM_LEGS {
            if s.robot.foot_contact[leg] {
                if s.air_time[leg] > 0.0 && moving {
                    feet_air += s.air_time[leg] - 0.5;
                }
                s.air_time[leg] = 0.0;
            } else {
                s.air_time[leg] += dt;
            }
        }
        let action_rate: f64 = act.iter().zip(s.last_action.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        s.last_action = act;

        let mut info = StepInfo { failure, ..Default::default() };
        let tracking = if failure { None } else { Tracking::measure(&s.robot, &self.terrain, s.params.com_offset).ok() };
        let (task, reward) = match tracking {
            Some(tr) => {
                let task = task_reward(&tr, &s.cmd, model.reference_height, &cfg.rewards);
                info.tilt = (tr.pitch - s.cmd.pitch).abs() > cfg.max_tilt_error
                    || (tr.roll - s.cmd.roll).abs() > cfg.max_tilt_error;
                info.low_height = tr.height < cfg.min_height;
                info.knee_contacts = self.knee_contacts();
                info.collision = self.trunk_collision();
                let s = &self.s;
                let reg = RegTerms {
                    action_rate,
                    torque: torque_sq,
                    vertical_vel: s.robot.base_lin_vel.z.powi(2),
                    collisions: f64::from(info.knee_contacts),
                    feet_air_time: feet_air,
                };
                (task, total_reward(&task, 0.0, &reg, &cfg.rewards, s.posture_weight) * dt)
            }
            None => {
                info.failure = true;
                (TaskRewards::default(), 0.0)
            }
        };
        info.timeout = !info.terminal() && self.s.steps >= cfg.max_episode_steps();

        let amp_after = if info.failure { amp_before } else { self.amp_state() };
        let distance = self.distance_from_spawn();
        let s = &mut self.s;
        let ep = &mut s.episode;
        ep.steps += 1;
        ep.return_sum += reward;
        ep.mean_task.v += task.v;
        ep.mean_task.w += task.w;
        ep.mean_task.h += task.h;
        ep.mean_task.theta += task.theta;

        let summary = if info.done() {
            let n = ep.steps as f64;
            let mut out = *ep;
            out.mean_task = TaskRewards {
                v: ep.mean_task.v / n,
                w: ep.mean_task.w / n,
                h: ep.mean_task.h / n,
                theta: ep.mean_task.theta / n,
            };
            out.distance = distance;
            out.info = info;
            Some(out)
        } else {
            if s.robot.time + 1e-9 >= s.next_resample {
                s.next_resample += cfg.resample_interval_s;
                if s.fixed_command.is_none() {
                    s.cmd = sample_command(s.slot.kind, &s.grid, &cfg.sampling, model.reference_height, &mut s.rng);
                }
            }
            None
        };
        // Timeouts keep a fresh observation for value bootstrapping.
        if !info.terminal() {
            self.observe();
        }
        StepOutcome { reward, task, info, amp_pair: (amp_before, amp_after), summary }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curricula::GridConfig;
    use crate::terrain::TerrainKind;

    fn quiet_ctx() -> Arc<EnvContext> {
        let config = EnvConfig { randomize_dynamics: false, pushes: false, observation_noise: false, ..Default::default() };
        Arc::new(EnvContext { model: RobotModel::a1(), config })
    }

    fn spec() -> EpisodeSpec {
        EpisodeSpec {
            slot: TerrainSlot { kind: TerrainKind::RoughFlat, level: 0 },
            grid: GridConfig::default().initial,
            push_interval: [15.0, 15.0],
        }
    }

    #[test]
    fn zero_action_keeps_standing() {
        let mut env = LocoEnv::new(quiet_ctx(), 3, spec());
        env.fix_command(Some(Command6D::default()));
        let z0 = env.tracking().height;
        for i in 0..1000 {
            let out = env.step(&[0.0; NUM_JOINTS]);
            assert!(!out.info.terminal(), "fell at step {i}: {:?}", out.info);
            if out.info.done() {
                assert!(out.info.timeout);
                assert_eq!(i, 999);
            }
        }
        assert!((env.tracking().height - z0).abs() < 0.02);
    }

    #[test]
    fn timeout_after_episode_length() {
        let mut env = LocoEnv::new(quiet_ctx(), 4, spec());
        env.fix_command(Some(Command6D::default()));
        let mut last = None;
        for _ in 0..1000 {
            last = Some(env.step(&[0.0; NUM_JOINTS]));
        }
        let out = last.unwrap();
        assert!(out.info.timeout);
        let summary = out.summary.unwrap();
        assert_eq!(summary.steps, 1000);
        assert_eq!(env.ctx.config.max_episode_steps() * env.ctx.config.decimation, 4000);
    }

    #[test]
    fn trunk_below_ground_is_collision() {
        let mut env = LocoEnv::new(quiet_ctx(), 5, spec());
        assert!(!env.trunk_collision());
        env.s.robot.base_pos.z = 0.03;
        assert!(env.trunk_collision());
    }

    #[test]
    fn excessive_roll_terminates_episode() {
        let mut env = LocoEnv::new(quiet_ctx(), 5, spec());
        env.fix_command(Some(Command6D::default()));
        env.s.robot.base_pos.z += 0.3;
        env.s.robot.base_quat = nalgebra::UnitQuaternion::from_euler_angles(1.3, 0.0, 0.0);
        let out = env.step(&[0.0; NUM_JOINTS]);
        assert!(out.info.tilt && out.info.terminal(), "{:?}", out.info);
        assert_eq!(out.summary.unwrap().steps, 1);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: EnvConfig::default() });
        let mut a = LocoEnv::new(Arc::clone(&ctx), 9, spec());
        let mut b = LocoEnv::new(ctx, 9, spec());
        for i in 0..100 {
            let act: Vec<f64> = (0..NUM_JOINTS).map(|j| ((i * 7 + j) as f64 * 0.37).sin()).collect();
            let (x, y) = (a.step(&act), b.step(&act));
            assert_eq!(x, y);
            if x.info.done() {
                a.reset(spec());
                b.reset(spec());
            }
        }
        assert_eq!(a.snapshot(), b.snapshot());
    }

    #[test]
    fn snapshot_round_trip_continues_identically() {
        let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: EnvConfig::default() });
        let mut a = LocoEnv::new(Arc::clone(&ctx), 11, spec());
        for _ in 0..10 {
            a.step(&[0.1; NUM_JOINTS]);
        }
        let json = serde_json::to_string(&a.snapshot()).unwrap();
        let mut b = LocoEnv::from_state(ctx, serde_json::from_str(&json).unwrap());
        for _ in 0..20 {
            assert_eq!(a.step(&[0.2; NUM_JOINTS]), b.step(&[0.2; NUM_JOINTS]));
        }
    }

    #[test]
    fn eval_interval_resamples_every_two_seconds() {
        let config = EnvConfig { resample_interval_s: 2.0, observation_noise: false, pushes: false, ..Default::default() };
        let mut env = LocoEnv::new(Arc::new(EnvContext { model: RobotModel::a1(), config }), 2, spec());
        let mut changes = Vec::new();
        let mut cmd = env.command();
        for i in 0..300 {
            let out = env.step(&[0.0; NUM_JOINTS]);
            if out.info.done() {
                break;
            }
            if env.command() != cmd {
                changes.push(i + 1);
                cmd = env.command();
            }
        }
        assert_eq!(&changes[..2], &[100, 200]);
    }
}
