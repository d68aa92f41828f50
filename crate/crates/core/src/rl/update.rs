use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{ppo_policy_loss, value_loss};
use super::{PpoConfig, RlError};

/// Forward-pass results for a minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub log_prob: Vec<f64>,
    pub value: Vec<f64>,
    /// Mean policy entropy over the minibatch.
    pub entropy: f64,
}

/// A trainable stochastic policy with a value head.
///
/// `backward` must follow the `evaluate` call whose outputs the upstream
/// gradients refer to; gradients accumulate until `step`.
pub trait PolicyValue: Clone {
    type Batch;
    fn evaluate(&mut self, batch: &Self::Batch, idx: &[usize]) -> Evaluation;
    fn backward(&mut self, d_log_prob: &[f64], d_value: &[f64], d_entropy: f64);
    /// Clips the accumulated gradient to `max_grad_norm`, applies one
    /// optimizer step, clears the gradient and returns the pre-clip norm.
    fn step(&mut self, max_grad_norm: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Total minibatch loss `policy + c_v·value − c_e·entropy` and the
/// statistics behind it. Also backpropagates when `backprop` is set.
pub fn minibatch_loss<M: PolicyValue>(
    model: &mut M,
    batch: &M::Batch,
    idx: &[usize],
    old_log_prob: &[f64],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    backprop: bool,
) -> (f64, UpdateMetrics) {
    let ev = model.evaluate(batch, idx);
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let pl = ppo_policy_loss(&ev.log_prob, &pick(old_log_prob), &pick(advantages), cfg.clip_eps);
    let (vl, dv) = value_loss(&ev.value, &pick(returns));
    let total = pl.loss + cfg.value_coef * vl - cfg.entropy_coef * ev.entropy;
    if backprop && total.is_finite() {
        let dv: Vec<f64> = dv.iter().map(|g| g * cfg.value_coef).collect();
        model.backward(&pl.grad_log_prob, &dv, -cfg.entropy_coef);
    }
    let m = UpdateMetrics {
        policy_loss: pl.loss,
        value_loss: vl,
        entropy: ev.entropy,
        approx_kl: pl.approx_kl,
        clip_fraction: pl.clip_fraction,
        grad_norm: 0.0,
    };
    (total, m)
}

/// Runs `cfg.epochs` passes of shuffled minibatch updates over `n` samples.
///
/// On a non-finite loss the model is restored to its state before the
/// call and [`RlError::NonFiniteLoss`] is returned.
pub fn ppo_update<M: PolicyValue, R: Rng + ?Sized>(
    model: &mut M,
    batch: &M::Batch,
    n: usize,
    old_log_prob: &[f64],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateMetrics, RlError> {
    for (name, len) in [("log_prob", old_log_prob.len()), ("advantages", advantages.len()), ("returns", returns.len())] {
        if len != n {
            return Err(RlError::BatchSize { field: name, expected: n, got: len });
        }
    }
    let snapshot = model.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mb_size = n.div_ceil(cfg.minibatches.max(1)).max(1);
    let mut acc = UpdateMetrics::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(mb_size) {
            let (total, m) = minibatch_loss(model, batch, idx, old_log_prob, advantages, returns, cfg, true);
            if !total.is_finite() {
                *model = snapshot;
                return Err(RlError::NonFiniteLoss);
            }
            let norm = model.step(cfg.max_grad_norm);
            if !norm.is_finite() {
                *model = snapshot;
                return Err(RlError::NonFiniteLoss);
            }
            acc.policy_loss += m.policy_loss;
            acc.value_loss += m.value_loss;
            acc.entropy += m.entropy;
            acc.approx_kl += m.approx_kl;
            acc.clip_fraction += m.clip_fraction;
            acc.grad_norm += norm;
            count += 1;
        }
    }
    let k = 1.0 / count.max(1) as f64;
    Ok(UpdateMetrics {
        policy_loss: acc.policy_loss * k,
        value_loss: acc.value_loss * k,
        entropy: acc.entropy * k,
        approx_kl: acc.approx_kl * k,
        clip_fraction: acc.clip_fraction * k,
        grad_norm: acc.grad_norm * k,
    })
}
