use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AmpError, AMP_PAIR_DIM};
use crate::nn::{Activation, AdamConfig, AdamState, Mlp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmpConfig {
    pub hidden: Vec<usize>,
    /// Gradient-penalty weight ω_gp.
    pub grad_penalty: f64,
    pub learning_rate: f64,
    /// Expert and policy samples per discriminator update.
    pub batch_size: usize,
    pub updates_per_iteration: usize,
    /// Minimum pairs collected for an expert dataset.
    pub expert_pairs: usize,
    /// Required stage-1 mean velocity-tracking reward before collection.
    pub expert_gate: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1024, 512],
            grad_penalty: 10.0,
            learning_rate: 1e-4,
            batch_size: 512,
            updates_per_iteration: 1,
            expert_pairs: 10_000,
            expert_gate: 0.7,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden.iter().any(|&w| w == 0) {
            return Err("amp hidden widths must be positive".into());
        }
        if self.grad_penalty < 0.0 || !(self.learning_rate > 0.0) {
            return Err("amp grad_penalty must be >= 0 and learning_rate > 0".into());
        }
        if self.batch_size == 0 || self.expert_pairs == 0 {
            return Err("amp batch_size and expert_pairs must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.expert_gate) {
            return Err("amp expert_gate must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// `max(0, 1 − ¼(D − 1)²)`.
pub fn style_reward(d: f64) -> f64 {
    (1.0 - 0.25 * (d - 1.0) * (d - 1.0)).max(0.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AmpMetrics {
    pub loss: f64,
    pub expert_loss: f64,
    pub policy_loss: f64,
    /// Mean squared input-gradient norm on expert samples.
    pub grad_penalty: f64,
    /// Fraction of expert samples with D > 0.
    pub expert_acc: f64,
    /// Fraction of policy samples with D < 0.
    pub policy_acc: f64,
    pub mean_d_expert: f64,
    pub mean_d_policy: f64,
}

/// Least-squares discriminator over normalized transition pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<F: Scalar> {
    pub net: Mlp<F>,
    pub adam: AdamState,
}

impl<F: Scalar> Discriminator<F> {
    pub fn new<R: Rng + ?Sized>(config: &AmpConfig, rng: &mut R) -> Self {
        let sizes = [vec![AMP_PAIR_DIM], config.hidden.clone(), vec![1]].concat();
        Self::from_net(Mlp::new(&sizes, Activation::Elu, 1.0, rng), config.learning_rate)
    }

    pub fn from_net(net: Mlp<F>, learning_rate: f64) -> Self {
        let adam = AdamState::new(net.num_params(), AdamConfig { lr: learning_rate, ..Default::default() });
        Self { net, adam }
    }

    pub fn predict(&self, x: ArrayView2<'_, F>) -> Result<Vec<f64>, AmpError> {
        Ok(self.net.predict(x)?.column(0).iter().map(|v| v.as_f64()).collect())
    }

    pub fn style_rewards(&self, x: ArrayView2<'_, F>) -> Result<Vec<f64>, AmpError> {
        Ok(self.predict(x)?.into_iter().map(style_reward).collect())
    }

    /// Loss `mean((D(e) − 1)²) + mean((D(p) + 1)²) + (ω/2)·mean‖∇ₓD(e)‖²`
    /// and, when `grad` is given, its parameter gradient accumulated there.
    pub fn loss(&self, expert: ArrayView2<'_, F>, policy: ArrayView2<'_, F>, grad_penalty: f64, grad: Option<&mut [F]>) -> Result<AmpMetrics, AmpError> {
        let ne = expert.nrows().max(1) as f64;
        let np = policy.nrows().max(1) as f64;
        let (de, ce) = self.net.forward(expert)?;
        let (dp, cp) = self.net.forward(policy)?;
        let de: Vec<f64> = de.column(0).iter().map(|v| v.as_f64()).collect();
        let dp: Vec<f64> = dp.column(0).iter().map(|v| v.as_f64()).collect();
        let expert_loss = de.iter().map(|d| (d - 1.0).powi(2)).sum::<f64>() / ne;
        let policy_loss = dp.iter().map(|d| (d + 1.0).powi(2)).sum::<f64>() / np;
        let pen_weight = 0.5 * grad_penalty / ne;
        let penalty_mean;
        match grad {
            Some(g) => {
                let dde = Array2::from_shape_fn((de.len(), 1), |(i, _)| F::cast_from(2.0 * (de[i] - 1.0) / ne));
                let ddp = Array2::from_shape_fn((dp.len(), 1), |(i, _)| F::cast_from(2.0 * (dp[i] + 1.0) / np));
                self.net.backward(&ce, dde.view(), g)?;
                self.net.backward(&cp, ddp.view(), g)?;
                let norms = self.net.input_grad_penalty_backward(&ce, F::cast_from(pen_weight), g)?;
                penalty_mean = norms.iter().map(|v| v.as_f64()).sum::<f64>() / ne;
            }
            None => {
                let gx = self.net.input_gradient(&ce)?;
                penalty_mean = gx.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / ne;
            }
        }
        Ok(AmpMetrics {
            loss: expert_loss + policy_loss + 0.5 * grad_penalty * penalty_mean,
            expert_loss,
            policy_loss,
            grad_penalty: penalty_mean,
            expert_acc: de.iter().filter(|&&d| d > 0.0).count() as f64 / ne,
            policy_acc: dp.iter().filter(|&&d| d < 0.0).count() as f64 / np,
            mean_d_expert: de.iter().sum::<f64>() / ne,
            mean_d_policy: dp.iter().sum::<f64>() / np,
        })
    }

    /// One Adam step on the loss. A non-finite loss or gradient leaves
    /// the parameters untouched.
    pub fn update(&mut self, expert: ArrayView2<'_, F>, policy: ArrayView2<'_, F>, grad_penalty: f64) -> Result<AmpMetrics, AmpError> {
        let mut g = vec![F::zero(); self.net.num_params()];
        let m = self.loss(expert, policy, grad_penalty, Some(&mut g))?;
        if !m.loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(AmpError::NonFiniteLoss);
        }
        self.adam.step(self.net.params_mut(), &g);
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn style_reward_points() {
        assert_eq!(style_reward(1.0), 1.0);
        assert_eq!(style_reward(-1.0), 0.0);
        assert_eq!(style_reward(0.0), 0.75);
        assert_eq!(style_reward(5.0), 0.0);
    }

    #[test]
    fn constant_zero_discriminator_loss_is_two() {
        let net = Mlp::<f64>::zeros(&[AMP_PAIR_DIM, 8, 1], Activation::Elu);
        let d = Discriminator::from_net(net, 1e-4);
        let x = Array2::from_elem((4, AMP_PAIR_DIM), 0.3);
        let m = d.loss(x.view(), x.view(), 10.0, None).unwrap();
        assert_eq!(m.grad_penalty, 0.0);
        assert_eq!(m.loss, 2.0);
    }

    #[test]
    fn non_finite_input_rejected_without_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AmpConfig { hidden: vec![8], ..Default::default() };
        let mut d = Discriminator::<f64>::new(&cfg, &mut rng);
        let before = d.clone();
        let mut x = Array2::zeros((2, AMP_PAIR_DIM));
        x[[0, 0]] = f64::NAN;
        assert!(matches!(d.update(x.view(), x.view(), 10.0), Err(AmpError::NonFiniteLoss)));
        assert_eq!(d, before);
    }
}
