/// Clipped-surrogate loss with its gradient with respect to each sample's
/// new log probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grad_log_prob: Vec<f64>,
    pub clip_fraction: f64,
    /// Estimate of KL(old ‖ new): mean((r − 1) − log r).
    pub approx_kl: f64,
}

/// `−mean(min(r·A, clip(r, 1−ε, 1+ε)·A))` with `r = exp(logp_new − logp_old)`.
pub fn ppo_policy_loss(log_prob_new: &[f64], log_prob_old: &[f64], advantage: &[f64], eps: f64) -> PolicyLoss {
    let n = log_prob_new.len();
    assert_eq!(log_prob_old.len(), n);
    assert_eq!(advantage.len(), n);
    let inv = 1.0 / n.max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    let mut clipped = 0usize;
    let mut kl = 0.0;
    for i in 0..n {
        let log_ratio = log_prob_new[i] - log_prob_old[i];
        let ratio = log_ratio.exp();
        let a = advantage[i];
        let unclipped = ratio * a;
        let clip = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        if unclipped <= clip {
            loss -= unclipped * inv;
            grad[i] = -unclipped * inv;
        } else {
            loss -= clip * inv;
        }
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += (ratio - 1.0) - log_ratio;
    }
    PolicyLoss { loss, grad_log_prob: grad, clip_fraction: clipped as f64 * inv, approx_kl: kl * inv }
}

/// `0.5·mean((v − G)²)` and its gradient with respect to each prediction.
pub fn value_loss(pred: &[f64], returns: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len();
    assert_eq!(returns.len(), n);
    let inv = 1.0 / n.max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(returns)
        .map(|(p, g)| {
            let e = p - g;
            loss += 0.5 * e * e * inv;
            e * inv
        })
        .collect();
    (loss, grad)
}
