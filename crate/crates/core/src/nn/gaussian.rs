use rand::Rng;
use rand_distr::StandardNormal;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

fn clamp_log_std(s: f64) -> f64 {
    s.clamp(LOG_STD_MIN, LOG_STD_MAX)
}

/// Log density of a diagonal Gaussian; `log_std` is clamped first.
pub fn gaussian_log_prob(mu: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &s), &a)| {
            let s = clamp_log_std(s);
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - HALF_LOG_2PI
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|&s| clamp_log_std(s) + 0.5 + HALF_LOG_2PI).sum()
}

/// Samples an action (or returns `mu` when `deterministic`) together with
/// its log probability.
pub fn gaussian_policy<R: Rng + ?Sized>(mu: &[f64], log_std: &[f64], deterministic: bool, rng: &mut R) -> (Vec<f64>, f64) {
    let action: Vec<f64> = if deterministic {
        mu.to_vec()
    } else {
        mu.iter()
            .zip(log_std)
            .map(|(&m, &s)| {
                let e: f64 = rng.sample(StandardNormal);
                m + clamp_log_std(s).exp() * e
            })
            .collect()
    };
    let lp = gaussian_log_prob(mu, log_std, &action);
    (action, lp)
}
