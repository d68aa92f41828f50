//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use ndarray::Array2;
use quadpose::amp::{style_reward, AmpConfig, DatasetMeta, Discriminator, ExpertDataset, AMP_PAIR_DIM};
use quadpose::config::TrainConfig;
use quadpose::curricula::{
    grid_update, reward_stage, sample_command, terrain_update, CommandGrid, CommandSampling, GridConfig, TerrainSlot,
};
use quadpose::dynamics::{self, mechanical_energy, penalty_force, resting_state, ContactParams, DomainParams, RobotModel, RobotState, NUM_JOINTS, PHYSICS_DT};
use quadpose::env::{pd_torque, quat_to_euler, task_reward, total_reward, Command6D, EnvConfig, EnvContext, EpisodeSpec, LocoEnv, PdGains, RegTerms, RewardWeights, TaskRewards, Tracking};
use quadpose::eval::{evaluate_batch, BatchStats};
use quadpose::nn::AdamConfig;
use quadpose::randomization::{sample_domain_params, DomainRanges};
use quadpose::rl::{minibatch_loss, ActorCritic, NetworkConfig, PolicyInputs, PolicyValue, PpoConfig, PpoLearner, CMD_DIM, CRITIC_DIM};
use quadpose::terrain::{TerrainKind, TerrainMap, TILE_SIZE};
use quadpose::train::{checkpoint_path, run_training, Trainer, METRICS_FILE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, Uniform};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// Formula oracles

fn euler_from_matrix(q: &UnitQuaternion<f64>) -> [f64; 3] {
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    let r = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    [r[(2, 1)].atan2(r[(2, 2)]), -r[(2, 0)].asin(), r[(1, 0)].atan2(r[(0, 0)])]
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn formula_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst_euler = 0.0f64;
    let mut n = 0;
    while n < 1000 {
        let v = Vector4::from_fn(|_, _| normal.sample(&mut rng));
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(v[0], v[1], v[2], v[3]));
        let oracle = euler_from_matrix(&q);
        if oracle[1].abs() >= 80f64.to_radians() {
            continue;
        }
        let e = quat_to_euler(&q);
        for (a, b) in [e.roll, e.pitch, e.yaw].iter().zip(oracle) {
            worst_euler = worst_euler.max(wrap(a - b).abs());
        }
        n += 1;
    }
    let h = FRAC_PI_4.cos();
    let q90 = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(h, h, 0.0, 0.0));
    let e90 = quat_to_euler(&q90);
    let ident = quat_to_euler(&UnitQuaternion::identity());

    let m = RobotModel::a1();
    let p = DomainParams::default();
    let gains = PdGains { kp: 28.0, kd: 0.7 };
    let q = m.default_joint_pos;
    let mut qd_des = q;
    qd_des[0] += 0.1;
    let tau = pd_torque(&qd_des, &q, &[0.0; NUM_JOINTS], gains, &p, &m);
    let mut far = q;
    far[1] += 10.0;
    let sat = pd_torque(&far, &q, &[0.0; NUM_JOINTS], gains, &p, &m);
    let zero = pd_torque(&q, &q, &[0.0; NUM_JOINTS], gains, &p, &m);
    let damped = pd_torque(&q, &q, &[2.0; NUM_JOINTS], gains, &p, &m);

    let w = RewardWeights::default();
    let cmd = Command6D::new(0.4, -0.2, 0.3, -0.05, 0.1, 0.05);
    let perfect = Tracking { vx: 0.4, vy: -0.2, wz: 0.3, height: 0.25, pitch: 0.1, roll: 0.05 };
    let ones = task_reward(&perfect, &cmd, 0.3, &w);
    let off = Tracking { vx: 0.4 + 0.3, vy: -0.2 + 0.4, wz: 0.3 + 0.5, height: 0.25 + 0.05, pitch: 0.1 + 0.3, roll: 0.05 - 0.4, };
    let r = task_reward(&off, &cmd, 0.3, &w);
    let total = total_reward(&TaskRewards { v: 1.0, ..Default::default() }, 0.0, &RegTerms::default(), &w, 1.0);
    let styled = total_reward(&TaskRewards { v: 1.0, ..Default::default() }, 0.75, &RegTerms::default(), &w, 1.0);
    let gated = total_reward(&TaskRewards { v: 0.0, w: 0.0, h: 0.2, theta: 0.4 }, 0.0, &RegTerms::default(), &w, 0.0);

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let checks = [
        ("quat->euler vs rotation matrix (1e-9)", worst_euler <= 1e-9),
        ("identity quaternion", ident.roll == 0.0 && ident.pitch == 0.0 && ident.yaw == 0.0),
        ("(sqrt2/2, sqrt2/2, 0, 0) -> roll pi/2", close(e90.roll, FRAC_PI_2) && close(e90.pitch, 0.0) && close(e90.yaw, 0.0)),
        ("pd 28*0.1 = 2.8", close(tau[0], 2.8) && tau[1..].iter().all(|&t| t == 0.0)),
        ("pd saturates at torque limit", sat[1] == m.torque_limit),
        ("pd zero error", zero.iter().all(|&t| t == 0.0)),
        ("pd damping -0.7*2", damped.iter().all(|&t| close(t, -1.4))),
        ("perfect tracking", ones.v == 1.0 && ones.w == 1.0 && ones.h == 1.0 && ones.theta == 1.0),
        ("velocity error^2 = sigma_v", close(r.v, (-1.0f64).exp())),
        ("yaw error (0.5)^2 / 0.25", close(r.w, (-1.0f64).exp())),
        ("height error |0.05| / 0.1", close(r.h, (-0.5f64).exp())),
        ("attitude error 0.25 / 0.25", close(r.theta, (-1.0f64).exp())),
        ("total r = w_v", close(total, 1.0)),
        ("total + 0.5*0.75 style", close(styled, 1.375)),
        ("posture gated", close(gated, 0.0)),
        ("style D=1", close(style_reward(1.0), 1.0)),
        ("style D=-1", close(style_reward(-1.0), 0.0)),
        ("style D=0", close(style_reward(0.0), 0.75)),
        ("style D=3 clamps", style_reward(3.0) == 0.0),
    ];
    let elapsed = start.elapsed().as_secs_f64();
    let failed: Vec<_> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    check(
        failed.is_empty() && elapsed < 1.0,
        format!("max euler error {worst_euler:.2e} over 1000 quats, {} point checks, failed {failed:?}, {elapsed:.3}s (limit 1s)", checks.len()),
    )
}

// ---------------------------------------------------------------------------
// Gradient suite

const FD_H: f64 = 1e-4;
const FD_RTOL: f64 = 1e-4;
const FD_ATOL: f64 = 1e-9;

struct FdStats {
    checked: usize,
    worst: f64,
    failures: usize,
}

impl FdStats {
    fn new() -> Self {
        Self { checked: 0, worst: 0.0, failures: 0 }
    }

    fn add(&mut self, analytic: f64, numeric: f64) {
        let err = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        self.checked += 1;
        if scale > 0.0 {
            self.worst = self.worst.max(err / scale);
        }
        if err > FD_RTOL * scale + FD_ATOL {
            self.failures += 1;
        }
    }
}

fn sample_indices(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    if len <= n {
        return (0..len).collect();
    }
    (0..n).map(|_| rng.random_range(0..len)).collect()
}

fn group_param(l: &mut PpoLearner<f64>, group: usize, k: usize) -> &mut f64 {
    match group {
        0 => &mut l.model.encoder.params_mut()[k],
        1 => &mut l.model.actor.params_mut()[k],
        2 => &mut l.model.critic.params_mut()[k],
        _ => &mut l.model.log_std[k],
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = NetworkConfig::default();
    let model = ActorCritic::<f64>::new(net.clone(), &mut rng);
    let mut learner = PpoLearner::new(model, AdamConfig::default());
    for (j, s) in learner.model.log_std.iter_mut().enumerate() {
        *s = -0.8 + 0.05 * j as f64;
    }
    let n = 8;
    let mut u = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0));
    let batch = PolicyInputs { history: u(n, net.history_dim()), command: u(n, CMD_DIM), critic: u(n, CRITIC_DIM), actions: u(n, 12) };
    let idx: Vec<usize> = (0..n).collect();
    let ev = learner.evaluate(&batch, &idx);
    let old: Vec<f64> = ev.log_prob.iter().enumerate().map(|(i, l)| l - 0.02 * (i as f64 - 3.5)).collect();
    let adv: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -0.8 } else { 1.1 }).collect();
    let ret: Vec<f64> = (0..n).map(|i| 0.2 * i as f64 - 0.6).collect();
    let ppo = PpoConfig::default();
    learner.zero_grads();
    minibatch_loss(&mut learner, &batch, &idx, &old, &adv, &ret, &ppo, true);
    let grads = learner.grads().clone();
    let loss_at = |l: &PpoLearner<f64>| minibatch_loss(&mut l.clone(), &batch, &idx, &old, &adv, &ret, &ppo, false).0;
    let names = ["encoder", "actor", "critic", "log_std"];
    let mut stats: Vec<FdStats> = (0..4).map(|_| FdStats::new()).collect();
    let mut prng = ChaCha8Rng::seed_from_u64(8);
    for group in 0..4 {
        for k in sample_indices(&mut prng, grads[group].len(), 60) {
            let mut plus = learner.clone();
            let mut minus = learner.clone();
            *group_param(&mut plus, group, k) += FD_H;
            *group_param(&mut minus, group, k) -= FD_H;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * FD_H);
            stats[group].add(grads[group][k], fd);
        }
    }

    let amp = AmpConfig::default();
    let disc = Discriminator::<f64>::new(&amp, &mut rng);
    let mut u = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.random_range(-1.5..1.5));
    let expert = u(6, AMP_PAIR_DIM);
    let policy = u(6, AMP_PAIR_DIM);
    let mut g = vec![0.0; disc.net.num_params()];
    disc.loss(expert.view(), policy.view(), amp.grad_penalty, Some(&mut g)).unwrap();
    let mut dstats = FdStats::new();
    for k in sample_indices(&mut prng, g.len(), 80) {
        let mut plus = disc.clone();
        let mut minus = disc.clone();
        plus.net.params_mut()[k] += FD_H;
        minus.net.params_mut()[k] -= FD_H;
        let lp = plus.loss(expert.view(), policy.view(), amp.grad_penalty, None).unwrap().loss;
        let lm = minus.loss(expert.view(), policy.view(), amp.grad_penalty, None).unwrap().loss;
        dstats.add(g[k], (lp - lm) / (2.0 * FD_H));
    }

    let elapsed = start.elapsed().as_secs_f64();
    let mut parts: Vec<String> = names.iter().zip(&stats).map(|(n, s)| format!("{n} {}/{} worst rel {:.1e}", s.checked - s.failures, s.checked, s.worst)).collect();
    parts.push(format!("discriminator+penalty {}/{} worst rel {:.1e}", dstats.checked - dstats.failures, dstats.checked, dstats.worst));
    let failures = stats.iter().map(|s| s.failures).sum::<usize>() + dstats.failures;
    check(failures == 0 && elapsed < 60.0, format!("h {FD_H:e}, rtol {FD_RTOL:e}: {}; {elapsed:.1}s (limit 60s)", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// Clipping property

fn clipping_property() -> Outcome {
    let eps = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4000;
    let new: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..0.0)).collect();
    let old: Vec<f64> = new.iter().map(|l| l - rng.random_range(-0.6..0.6)).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let pl = quadpose::rl::ppo_policy_loss(&new, &old, &adv, eps);
    let mut clipped = 0;
    let mut violations = 0;
    let mut active_nonzero = 0;
    for i in 0..n {
        let ratio = (new[i] - old[i]).exp();
        let in_clip = (adv[i] > 0.0 && ratio > 1.0 + eps) || (adv[i] < 0.0 && ratio < 1.0 - eps);
        if in_clip {
            clipped += 1;
            if pl.grad_log_prob[i] != 0.0 {
                violations += 1;
            }
        } else if adv[i] != 0.0 && pl.grad_log_prob[i] != 0.0 {
            active_nonzero += 1;
        }
    }

    // Through the full network: a clipped sample contributes no parameter gradient.
    let mut net_rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = NetworkConfig { encoder_hidden: vec![16], latent_dim: 8, actor_hidden: vec![16], critic_hidden: vec![16], ..Default::default() };
    let model = ActorCritic::<f64>::new(cfg.clone(), &mut net_rng);
    let mut learner = PpoLearner::new(model, AdamConfig::default());
    let mut u = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| net_rng.random_range(-1.0..1.0));
    let batch = PolicyInputs { history: u(4, cfg.history_dim()), command: u(4, CMD_DIM), critic: u(4, CRITIC_DIM), actions: u(4, 12) };
    let lp = learner.evaluate(&batch, &[0, 1, 2, 3]).log_prob;
    let old_net = vec![lp[0] - 0.5, lp[1] + 0.5, lp[2] - 0.05, lp[3] + 0.05];
    let adv_net = vec![1.0, -1.0, 1.0, -1.0];
    let ppo = PpoConfig { value_coef: 0.0, entropy_coef: 0.0, ..Default::default() };
    let mut net_zero = true;
    let mut net_live = true;
    for i in 0..4 {
        learner.zero_grads();
        minibatch_loss(&mut learner, &batch, &[i], &old_net, &adv_net, &[0.0; 4], &ppo, true);
        let all_zero = learner.grads().iter().all(|g| g.iter().all(|&x| x == 0.0));
        if i < 2 {
            net_zero &= all_zero;
        } else {
            net_live &= !all_zero;
        }
    }
    check(
        violations == 0 && clipped > 0 && active_nonzero > 0 && net_zero && net_live,
        format!(
            "{clipped} clipped of {n} samples, {violations} with non-zero d/dlogp; unclipped samples with gradient {active_nonzero}; network grads zero on clipped samples: {net_zero}, non-zero otherwise: {net_live}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Curriculum state machine

fn curriculum_state_machine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kinds = TerrainKind::ALL;
    let slot = |kind, level| TerrainSlot { kind, level };
    let mut fails = Vec::new();
    let mut expect = |name: &str, ok: bool| {
        if !ok {
            fails.push(name.to_string());
        }
    };
    expect("4.5 m on 8 m, level 3 -> 4", terrain_update(slot(TerrainKind::Wavy, 3), 4.5, 8.0, &kinds, &mut rng) == slot(TerrainKind::Wavy, 4));
    expect("1 m, level 0 -> 0", terrain_update(slot(TerrainKind::Wavy, 0), 1.0, 8.0, &kinds, &mut rng) == slot(TerrainKind::Wavy, 0));
    expect("3.9 m, level 5 -> 4", terrain_update(slot(TerrainKind::StairsUp, 5), 3.9, 8.0, &kinds, &mut rng) == slot(TerrainKind::StairsUp, 4));
    expect("exactly half keeps level", terrain_update(slot(TerrainKind::StairsUp, 5), 4.0, 8.0, &kinds, &mut rng) == slot(TerrainKind::StairsUp, 5));
    let mut resampled = std::collections::HashSet::new();
    let mut capped = true;
    for _ in 0..200 {
        let s = terrain_update(slot(TerrainKind::Wavy, 9), 5.0, 8.0, &kinds, &mut rng);
        capped &= s.level == 9;
        resampled.insert(s.kind);
    }
    expect("level 9 stays 9 with kind resampled", capped && resampled.len() == kinds.len());

    let total = 1000;
    expect("update 0 -> stage 0", reward_stage(0, total, 0.15, 0.4).unwrap() == quadpose::curricula::RewardStage { stage: 0, posture_weight: 0.0 });
    let mid = reward_stage(275, total, 0.15, 0.4).unwrap();
    expect("midpoint -> (1, 0.5)", mid.stage == 1 && mid.posture_weight == 0.5);
    expect("t1 boundary -> (1, 0)", reward_stage(150, total, 0.15, 0.4).unwrap().posture_weight == 0.0);
    expect("last update -> (2, 1)", reward_stage(total - 1, total, 0.15, 0.4).unwrap() == quadpose::curricula::RewardStage::FULL);
    expect("invalid thresholds rejected", reward_stage(0, total, 0.5, 0.4).is_err());
    let mut prev = 0.0;
    let mut monotone = true;
    for u in 0..total {
        let w = reward_stage(u, total, 0.15, 0.4).unwrap().posture_weight;
        monotone &= w >= prev;
        prev = w;
    }
    expect("posture weight non-decreasing", monotone);

    let grid = GridConfig::default().initial;
    let sampling = CommandSampling::default();
    let (mut up_ok, mut down_ok, mut flat_ok) = (true, true, true);
    for _ in 0..100_000 {
        let u = sample_command(TerrainKind::StairsUp, &grid, &sampling, 0.3, &mut rng);
        up_ok &= (-FRAC_PI_4..=0.0).contains(&u.pitch);
        let d = sample_command(TerrainKind::StairsDown, &grid, &sampling, 0.3, &mut rng);
        down_ok &= (0.0..=FRAC_PI_4).contains(&d.pitch);
        let f = sample_command(TerrainKind::RoughFlat, &grid, &sampling, 0.3, &mut rng);
        flat_ok &= f.within_limits(0.3) && (0.1..=0.4).contains(&(0.3 + f.dh));
    }
    expect("stairs_up pitch in [-pi/4, 0] (1e5)", up_ok);
    expect("stairs_down pitch in [0, pi/4] (1e5)", down_ok);
    expect("flat samples within command limits (1e5)", flat_ok);

    let cfg = GridConfig::default();
    let g5 = CommandGrid { vx: [-0.5, 0.5], vy: [-0.5, 0.5], wz: [-0.5, 0.5] };
    let grown = grid_update(0.85, &g5, &cfg);
    expect("0.85 at +-0.5 -> +-0.6", grown.vx == [-0.6, 0.6] && grown.vy == [-0.6, 0.6] && grown.wz == [-0.6, 0.6]);
    expect("0.5 unchanged", grid_update(0.5, &g5, &cfg) == g5);
    expect("exactly 0.8 unchanged", grid_update(0.8, &g5, &cfg) == g5);
    expect("0.99 at cap unchanged", grid_update(0.99, &cfg.caps, &cfg) == cfg.caps);
    let n = fails.len();
    check(n == 0, if n == 0 { "terrain, reward-stage, stair-pitch (1e5 samples) and grid rules exact".into() } else { format!("failed: {fails:?}") })
}

// ---------------------------------------------------------------------------
// Randomization containment

fn ks_uniform(mut xs: Vec<f64>, lo: f64, hi: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let u = Uniform::new(lo, hi).unwrap();
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = u.cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

fn randomization_containment() -> Outcome {
    let ranges = DomainRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let samples: Vec<DomainParams> = (0..10_000).map(|_| sample_domain_params(&mut rng, &ranges)).collect();
    let inside = samples.iter().all(|p| ranges.contains(p));
    let table = [
        ("friction", [0.05, 2.75], ranges.ground_friction),
        ("restitution", [0.0, 1.0], ranges.restitution),
        ("load_mass", [0.0, 3.0], ranges.load_mass),
        ("link_mass", [0.8, 1.2], ranges.link_mass_scale),
        ("com", [-0.05, 0.05], ranges.com_offset),
        ("p_gain", [0.8, 1.2], ranges.p_gain_scale),
        ("d_gain", [0.8, 1.2], ranges.d_gain_scale),
        ("motor", [0.8, 1.2], ranges.motor_power_scale),
        ("delay", [0.0, 0.02], ranges.action_delay),
    ];
    let defaults_match = table.iter().all(|(_, t, r)| t == r);
    let fields: Vec<(&str, Vec<f64>, [f64; 2])> = vec![
        ("friction", samples.iter().map(|p| p.ground_friction).collect(), ranges.ground_friction),
        ("restitution", samples.iter().map(|p| p.restitution).collect(), ranges.restitution),
        ("load_mass", samples.iter().map(|p| p.load_mass).collect(), ranges.load_mass),
        ("link_mass", samples.iter().map(|p| p.link_mass_scale).collect(), ranges.link_mass_scale),
        ("com_x", samples.iter().map(|p| p.com_offset[0]).collect(), ranges.com_offset),
        ("com_y", samples.iter().map(|p| p.com_offset[1]).collect(), ranges.com_offset),
        ("com_z", samples.iter().map(|p| p.com_offset[2]).collect(), ranges.com_offset),
        ("p_gain", samples.iter().map(|p| p.p_gain_scale).collect(), ranges.p_gain_scale),
        ("d_gain", samples.iter().map(|p| p.d_gain_scale).collect(), ranges.d_gain_scale),
        ("motor", samples.iter().map(|p| p.motor_power_scale).collect(), ranges.motor_power_scale),
        ("delay", samples.iter().map(|p| p.action_delay).collect(), ranges.action_delay),
    ];
    let ks: Vec<(&str, f64)> = fields.into_iter().map(|(n, xs, r)| (n, ks_uniform(xs, r[0], r[1]))).collect();
    let worst = ks.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    check(
        inside && defaults_match && worst.1 < 0.02,
        format!("10^4 samples inside the domain ranges: {inside}; defaults equal the published ranges: {defaults_match}; max KS {:.4} ({}) < 0.02", worst.1, worst.0),
    )
}

// ---------------------------------------------------------------------------
// Dynamics sanity

fn dynamics_sanity() -> Outcome {
    let start = Instant::now();
    let m = RobotModel::a1();
    let p = DomainParams::default();
    let flat = TerrainMap::flat(TILE_SIZE);

    let mut s = resting_state(&m, &flat, [4.0, 4.0], 0.4).unwrap();
    let (z0, xy0) = (s.base_pos.z, s.base_pos.xy());
    let mut replay = s.clone();
    for _ in 0..200 {
        s = dynamics::step(&s, &[0.0; NUM_JOINTS], &flat, &m, &p, PHYSICS_DT).unwrap();
    }
    let drift = (s.base_pos.z - z0).abs();
    let creep = (s.base_pos.xy() - xy0).norm();

    let air = RobotState::standing(&m, [4.0, 4.0], 1.0, 0.0);
    let fell = dynamics::step(&air, &[0.0; NUM_JOINTS], &flat, &m, &p, PHYSICS_DT).unwrap();
    let free_fall = fell.base_lin_vel.z == -9.81 * PHYSICS_DT && fell.base_lin_vel.x == 0.0 && fell.base_lin_vel.y == 0.0;

    let cp = ContactParams { k_n: 10_000.0, c_n: 200.0, k_t: 400.0 };
    // 4 mm penetration at rest gives N = 40 N; slip 0.125 m/s demands 50 N.
    let fc = penalty_force(0.004, &Vector3::new(0.125, 0.0, 0.0), &cp, 0.5, 0.0);
    let tangential = fc.force.xy().norm();
    let cone = (fc.force.z - 40.0).abs() < 1e-9 && (tangential - 20.0).abs() < 1e-9;
    let spring = (penalty_force(0.001, &Vector3::zeros(), &cp, 1.0, 0.0).force.z - 10.0).abs() < 1e-9;
    let airborne = penalty_force(-0.01, &Vector3::new(1.0, 0.0, -1.0), &cp, 1.0, 0.0);
    let no_contact = !airborne.in_contact && airborne.force == Vector3::zeros();

    let torques: [f64; NUM_JOINTS] = std::array::from_fn(|j| 3.0 * ((j as f64) * 0.7).sin());
    let mut a = replay.clone();
    for _ in 0..200 {
        a = dynamics::step(&a, &torques, &flat, &m, &p, PHYSICS_DT).unwrap();
        replay = dynamics::step(&replay, &torques, &flat, &m, &p, PHYSICS_DT).unwrap();
    }
    let deterministic = a == replay;

    let mut mc = m.clone();
    mc.joint_damping = [0.0; NUM_JOINTS];
    let mut f = RobotState::standing(&mc, [4.0, 4.0], 10.0, 0.0);
    f.base_lin_vel = Vector3::new(0.5, -0.3, 3.0);
    f.base_ang_vel = Vector3::new(1.5, -0.7, 2.0);
    let e0 = mechanical_energy(&f, &mc, &p);
    for _ in 0..200 {
        f = dynamics::step(&f, &[0.0; NUM_JOINTS], &flat, &mc, &p, PHYSICS_DT).unwrap();
    }
    let energy_drift = ((mechanical_energy(&f, &mc, &p) - e0) / e0).abs();

    let elapsed = start.elapsed().as_secs_f64();
    check(
        drift < 1e-3 && free_fall && cone && spring && no_contact && deterministic && energy_drift < 1e-3 && elapsed < 30.0,
        format!(
            "settle height change {:.3} mm over 200 steps (< 1 mm), horizontal creep {:.2} mm; free fall exact: {free_fall}; friction clamp 20 N: {cone}; spring 10 N: {spring}; no-contact zero force: {no_contact}; bit-identical replay: {deterministic}; energy drift {:.2e}/s (< 1e-3); {elapsed:.2}s (limit 30s)",
            drift * 1e3, creep * 1e3, energy_drift
        ),
    )
}

// ---------------------------------------------------------------------------
// Learning benchmark

pub const BENCH_UPDATES: u64 = 1500;
pub const BENCH_EVAL_EVERY: u64 = 50;
pub const BENCH_RV: f64 = 0.7;
pub const BENCH_LENGTH_FRACTION: f64 = 0.8;

fn benchmark_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = seed;
    cfg.num_envs = 64;
    cfg.stage1.updates = BENCH_UPDATES;
    cfg.stage2.updates = 0;
    let g = CommandGrid { vx: [-0.6, 0.6], vy: [0.0, 0.0], wz: [-0.8, 0.8] };
    cfg.curriculum.grid.enabled = false;
    cfg.curriculum.grid.initial = g;
    cfg.curriculum.grid.caps = g;
    cfg.curriculum.reward_curriculum = false;
    cfg.env.sampling.posture = false;
    cfg
}

fn bench_eval(t: &Trainer, seed: u64) -> BatchStats {
    let cfg = t.config();
    evaluate_batch(t.policy(), &cfg.env, TerrainSlot { kind: TerrainKind::RoughFlat, level: 0 }, cfg.curriculum.grid.caps, 64, 1000 + seed)
}

fn bench_passes(s: &BatchStats) -> bool {
    s.mean_rv >= BENCH_RV && s.mean_episode_length >= BENCH_LENGTH_FRACTION * s.max_episode_length as f64
}

fn learning_benchmark() -> Outcome {
    let start = Instant::now();
    let mut passed = 0;
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        if passed >= 2 || (seed as i32 - passed) >= 2 {
            break;
        }
        let mut t = Trainer::new(benchmark_config(seed)).map_err(|e| e.to_string())?;
        let mut best: Option<(u64, BatchStats)> = None;
        let mut ok = false;
        while !t.is_finished() {
            t.train_update().map_err(|e| e.to_string())?;
            let u = t.updates_done();
            if u % BENCH_EVAL_EVERY == 0 || t.is_finished() {
                let s = bench_eval(&t, seed);
                println!("    seed {seed} update {u}: R_v {:.3}, length {:.0}/{}", s.mean_rv, s.mean_episode_length, s.max_episode_length);
                if best.is_none_or(|(_, b)| s.mean_rv > b.mean_rv) {
                    best = Some((u, s));
                }
                if bench_passes(&s) {
                    ok = true;
                    best = Some((u, s));
                    break;
                }
            }
        }
        let (u, s) = best.expect("at least one evaluation");
        lines.push(format!("seed {seed}: {} at update {u} (R_v {:.3}, length {:.0})", if ok { "pass" } else { "fail" }, s.mean_rv, s.mean_episode_length));
        passed += i32::from(ok);
    }
    check(
        passed >= 2,
        format!("{passed}/3 seeds reached R_v >= {BENCH_RV} and length >= {:.0}% of max within {BENCH_UPDATES} updates; {}; {:.0}s", BENCH_LENGTH_FRACTION * 100.0, lines.join("; "), start.elapsed().as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// AMP smoke test

fn gait_action(t: f64) -> [f64; 12] {
    let p = 2.0 * PI * 2.0 * t;
    let mut a = [0.0; 12];
    for leg in 0..4 {
        let ph = if leg == 0 || leg == 3 { p } else { p + PI };
        a[leg * 3 + 1] = 0.15 * ph.sin() / 0.25;
        a[leg * 3 + 2] = -0.3 * (-ph.cos()).max(0.0) / 0.25;
    }
    a
}

fn collect_pairs(n: usize, seed: u64, mut policy: impl FnMut(&LocoEnv, &mut ChaCha8Rng) -> [f64; 12]) -> Array2<f64> {
    let cfg = EnvConfig { pushes: false, ..Default::default() };
    let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config: cfg });
    let spec = EpisodeSpec { slot: TerrainSlot { kind: TerrainKind::RoughFlat, level: 0 }, grid: GridConfig::default().initial, push_interval: [15.0, 15.0] };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = LocoEnv::new(ctx, seed, spec);
    env.fix_command(Some(Command6D::new(0.4, 0.0, 0.0, 0.0, 0.0, 0.0)));
    env.reset(spec);
    let mut out = Array2::zeros((n, AMP_PAIR_DIM));
    let mut row = 0;
    while row < n {
        let before = env.amp_state();
        let a = policy(&env, &mut rng);
        let o = env.step(&a);
        if !o.info.terminal() {
            let after = env.amp_state();
            out.row_mut(row).as_slice_mut().unwrap()[..43].copy_from_slice(&before);
            out.row_mut(row).as_slice_mut().unwrap()[43..].copy_from_slice(&after);
            row += 1;
        }
        if o.info.done() {
            env.reset(spec);
        }
    }
    out
}

fn amp_smoke() -> Outcome {
    let start = Instant::now();
    let expert_raw = collect_pairs(10_000, 1, |env, _| gait_action(env.steps() as f64 * 0.02));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let random_raw = collect_pairs(4_000, 2, |_, rng| std::array::from_fn(|_| normal.sample(rng)));
    let meta = DatasetMeta { policy_digest: "open-loop trot".into(), seed: 1, gate_score: 1.0 };
    let ds = ExpertDataset::new(expert_raw, meta).map_err(|e| e.to_string())?;
    let random = ds.normalize(random_raw.view());
    let cfg = AmpConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut disc = Discriminator::<f32>::new(&cfg, &mut rng);
    let f32s = |a: &Array2<f64>| a.mapv(|x| x as f32);
    for _ in 0..200 {
        let e = f32s(&ds.sample(cfg.batch_size, &mut rng));
        let rows: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..random.nrows())).collect();
        let p = f32s(&random.select(ndarray::Axis(0), &rows));
        disc.update(e.view(), p.view(), cfg.grad_penalty).map_err(|e| e.to_string())?;
    }
    let expert_eval = f32s(&ds.sample(2000, &mut rng));
    let random_eval = f32s(&random);
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let de = mean(disc.predict(expert_eval.view()).map_err(|e| e.to_string())?);
    let dr = mean(disc.predict(random_eval.view()).map_err(|e| e.to_string())?);
    let se = mean(disc.style_rewards(expert_eval.view()).map_err(|e| e.to_string())?);
    let sr = mean(disc.style_rewards(random_eval.view()).map_err(|e| e.to_string())?);
    check(
        de - dr > 1.0 && se - sr >= 0.3,
        format!("mean D(expert) {de:.3} - D(random) {dr:.3} = {:.3} (> 1.0); style {se:.3} vs {sr:.3}, gap {:.3} (>= 0.3); {:.1}s", de - dr, se - sr, start.elapsed().as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// Checkpoint determinism

fn checkpoint_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let expert = dir.path().join("expert.qpck");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pairs = Array2::from_shape_fn((600, AMP_PAIR_DIM), |_| rng.random_range(-1.0..1.0));
    ExpertDataset::new(pairs, DatasetMeta { policy_digest: "synthetic".into(), seed: 12, gate_score: 1.0 })
        .and_then(|d| d.save(&expert))
        .map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::default();
    cfg.num_envs = 8;
    cfg.stage1.updates = 8;
    cfg.stage2.updates = 7;
    cfg.checkpoint_interval = 5;
    cfg.expert.collect = false;
    cfg.expert.path = Some(expert);
    cfg.amp.batch_size = 128;
    let k = 5;
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    let run = |out: &Path, resume: Option<&Path>, max: Option<u64>| run_training(cfg.clone(), out, resume, max, |_| {}).map_err(|e| e.to_string());
    run(&full, None, None)?;
    run(&split, None, Some(k))?;
    run(&split, Some(&checkpoint_path(&split, k)), None)?;
    let read = |p: &Path| fs::read_to_string(p.join(METRICS_FILE)).map(|s| s.lines().map(String::from).collect::<Vec<_>>()).map_err(|e| e.to_string());
    let (a, b) = (read(&full)?, read(&split)?);
    let same_metrics = a.len() == 15 && a == b;
    let last = |p: &Path| quadpose::train::load_policy(&checkpoint_path(p, 15)).map(|l| quadpose::train::policy_digest(&l.policy)).map_err(|e| e.to_string());
    let same_weights = last(&full)? == last(&split)?;
    check(
        same_metrics && same_weights,
        format!("resume at update {k}, 10 further updates spanning the stage-2 switch: metrics identical {same_metrics}, final weights identical {same_weights}"),
    )
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("formula oracles", formula_oracles),
        ("gradient suite", gradient_suite),
        ("clipping property", clipping_property),
        ("curriculum state machine", curriculum_state_machine),
        ("randomization containment", randomization_containment),
        ("dynamics sanity", dynamics_sanity),
        ("AMP smoke test", amp_smoke),
        ("checkpoint determinism", checkpoint_determinism),
        ("desk-scale learning benchmark", learning_benchmark),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
