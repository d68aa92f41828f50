use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::HISTORY_STEP_DIM;
use super::update::{Evaluation, PolicyValue};
use crate::env::{ACTION_DIM, PRIVILEGED_DIM, PROPRIO_DIM};
use crate::nn::{clip_grad_norm, Activation, AdamConfig, AdamState, Mlp, MlpCache, NnError, Scalar, LOG_STD_MAX, LOG_STD_MIN};

pub const CMD_DIM: usize = 6;
/// Critic input: proprioception, privileged state and command.
pub const CRITIC_DIM: usize = PROPRIO_DIM + PRIVILEGED_DIM + CMD_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Steps in the encoder's history window.
    pub history_len: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub init_log_std: f64,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            history_len: 5,
            encoder_hidden: vec![256, 128],
            latent_dim: 32,
            actor_hidden: vec![512, 256, 128],
            critic_hidden: vec![512, 256, 128],
            init_log_std: -1.2,
            activation: Activation::Elu,
        }
    }
}

impl NetworkConfig {
    pub fn history_dim(&self) -> usize {
        self.history_len * HISTORY_STEP_DIM
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        [vec![self.history_dim()], self.encoder_hidden.clone(), vec![self.latent_dim]].concat()
    }

    pub fn actor_sizes(&self) -> Vec<usize> {
        [vec![self.latent_dim + CMD_DIM], self.actor_hidden.clone(), vec![ACTION_DIM]].concat()
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        [vec![CRITIC_DIM], self.critic_hidden.clone(), vec![1]].concat()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.history_len == 0 || self.latent_dim == 0 {
            return Err("network history_len and latent_dim must be positive".into());
        }
        let widths = self.encoder_hidden.iter().chain(&self.actor_hidden).chain(&self.critic_hidden);
        if widths.clone().any(|&w| w == 0) {
            return Err("network hidden widths must be positive".into());
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return Err(format!("init_log_std must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]"));
        }
        Ok(())
    }
}

/// History encoder → actor mean, diagonal Gaussian head, and an
/// asymmetric critic. The actor path never sees privileged inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic<F: Scalar> {
    pub config: NetworkConfig,
    pub encoder: Mlp<F>,
    pub actor: Mlp<F>,
    pub critic: Mlp<F>,
    pub log_std: Vec<F>,
}

/// Inputs for a batch of samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInputs<F: Scalar> {
    pub history: Array2<F>,
    pub command: Array2<F>,
    pub critic: Array2<F>,
    pub actions: Array2<F>,
}

impl<F: Scalar> PolicyInputs<F> {
    pub fn len(&self) -> usize {
        self.history.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            history: self.history.select(Axis(0), idx),
            command: self.command.select(Axis(0), idx),
            critic: self.critic.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
        }
    }
}

pub struct ActorForward<F: Scalar> {
    pub mean: Array2<F>,
    enc_cache: MlpCache<F>,
    act_cache: MlpCache<F>,
}

impl<F: Scalar> ActorCritic<F> {
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Self {
        let act = config.activation;
        let encoder = Mlp::new(&config.encoder_sizes(), act, 1.0, rng);
        let actor = Mlp::new(&config.actor_sizes(), act, 0.1, rng);
        let critic = Mlp::new(&config.critic_sizes(), act, 1.0, rng);
        let log_std = vec![F::cast_from(config.init_log_std); ACTION_DIM];
        Self { config, encoder, actor, critic, log_std }
    }

    pub fn cast<G: Scalar>(&self) -> ActorCritic<G> {
        ActorCritic {
            config: self.config.clone(),
            encoder: self.encoder.cast(),
            actor: self.actor.cast(),
            critic: self.critic.cast(),
            log_std: self.log_std.iter().map(|v| G::cast_from(v.as_f64())).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.actor.num_params() + self.critic.num_params() + self.log_std.len()
    }

    pub fn log_std_f64(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.as_f64().clamp(LOG_STD_MIN, LOG_STD_MAX)).collect()
    }

    fn actor_input(&self, latent: &Array2<F>, command: ArrayView2<'_, F>) -> Result<Array2<F>, NnError> {
        if command.ncols() != CMD_DIM {
            return Err(NnError::ShapeMismatch { expected: CMD_DIM, got: command.ncols() });
        }
        Ok(concatenate(Axis(1), &[latent.view(), command]).expect("row counts agree"))
    }

    /// Mean action for each (history window, command) row.
    pub fn action_mean(&self, history: ArrayView2<'_, F>, command: ArrayView2<'_, F>) -> Result<Array2<F>, NnError> {
        let latent = self.encoder.predict(history)?;
        self.actor.predict(self.actor_input(&latent, command)?.view())
    }

    pub fn actor_forward(&self, history: ArrayView2<'_, F>, command: ArrayView2<'_, F>) -> Result<ActorForward<F>, NnError> {
        let (latent, enc_cache) = self.encoder.forward(history)?;
        let (mean, act_cache) = self.actor.forward(self.actor_input(&latent, command)?.view())?;
        Ok(ActorForward { mean, enc_cache, act_cache })
    }

    /// Accumulates encoder and actor gradients for an upstream dL/dμ.
    pub fn actor_backward(&self, fwd: &ActorForward<F>, d_mean: ArrayView2<'_, F>, g_encoder: &mut [F], g_actor: &mut [F]) -> Result<(), NnError> {
        let d_in = self.actor.backward(&fwd.act_cache, d_mean, g_actor)?;
        let d_latent = d_in.slice(s![.., ..self.config.latent_dim]);
        self.encoder.backward(&fwd.enc_cache, d_latent, g_encoder)?;
        Ok(())
    }

    pub fn values(&self, critic_in: ArrayView2<'_, F>) -> Result<Array1<F>, NnError> {
        Ok(self.critic.predict(critic_in)?.column(0).to_owned())
    }
}

/// Per-sample diagonal-Gaussian log densities and their derivatives with
/// respect to the mean and the (clamped) log standard deviations.
pub fn gaussian_terms<F: Scalar>(mean: &Array2<F>, log_std: &[f64], actions: &Array2<F>) -> (Vec<f64>, Array2<f64>, Array2<f64>) {
    let n = mean.nrows();
    let k = mean.ncols();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut logp = vec![0.0; n];
    let mut d_mu = Array2::zeros((n, k));
    let mut d_ls = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let s = log_std[j];
            let sigma = s.exp();
            let z = (actions[[i, j]].as_f64() - mean[[i, j]].as_f64()) / sigma;
            logp[i] += -0.5 * z * z - s - half_log_2pi;
            d_mu[[i, j]] = z / sigma;
            d_ls[[i, j]] = z * z - 1.0;
        }
    }
    (logp, d_mu, d_ls)
}

/// PPO learner: an actor-critic with one Adam state per parameter group
/// (encoder, actor, critic, log-std).
#[derive(Debug, Clone)]
pub struct PpoLearner<F: Scalar> {
    pub model: ActorCritic<F>,
    pub adam: [AdamState; 4],
    grads: [Vec<F>; 4],
    cache: Option<LearnerCache<F>>,
}

#[derive(Debug, Clone)]
struct LearnerCache<F: Scalar> {
    mean: Array2<F>,
    enc_cache: MlpCache<F>,
    act_cache: MlpCache<F>,
    crit_cache: MlpCache<F>,
    d_mu: Array2<f64>,
    d_ls: Array2<f64>,
}

impl<F: Scalar> PpoLearner<F> {
    pub fn new(model: ActorCritic<F>, adam: AdamConfig) -> Self {
        let sizes = [model.encoder.num_params(), model.actor.num_params(), model.critic.num_params(), model.log_std.len()];
        Self {
            adam: sizes.map(|n| AdamState::new(n, adam)),
            grads: sizes.map(|n| vec![F::zero(); n]),
            model,
            cache: None,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for a in &mut self.adam {
            a.config.lr = lr;
        }
    }

    /// Gradients accumulated since the last step: encoder, actor, critic, log-std.
    pub fn grads(&self) -> &[Vec<F>; 4] {
        &self.grads
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(F::zero());
        }
    }
}

impl<F: Scalar> PolicyValue for PpoLearner<F> {
    type Batch = PolicyInputs<F>;

    fn evaluate(&mut self, batch: &PolicyInputs<F>, idx: &[usize]) -> Evaluation {
        let mb = batch.select(idx);
        let m = &self.model;
        let (latent, enc_cache) = m.encoder.forward(mb.history.view()).expect("history width");
        let (mean, act_cache) = m.actor.forward(m.actor_input(&latent, mb.command.view()).expect("command width").view()).expect("actor width");
        let (v, crit_cache) = m.critic.forward(mb.critic.view()).expect("critic width");
        let log_std = m.log_std_f64();
        let (log_prob, d_mu, d_ls) = gaussian_terms(&mean, &log_std, &mb.actions);
        let entropy = crate::nn::gaussian_entropy(&log_std);
        self.cache = Some(LearnerCache { mean, enc_cache, act_cache, crit_cache, d_mu, d_ls });
        Evaluation { log_prob, value: v.column(0).iter().map(|x| x.as_f64()).collect(), entropy }
    }

    fn backward(&mut self, d_log_prob: &[f64], d_value: &[f64], d_entropy: f64) {
        let c = self.cache.take().expect("evaluate before backward");
        let n = d_log_prob.len();
        let d_mean = Array2::from_shape_fn(c.mean.dim(), |(i, j)| F::cast_from(d_log_prob[i] * c.d_mu[[i, j]]));
        let m = &self.model;
        let [g_enc, g_act, g_crit, g_ls] = &mut self.grads;
        let d_in = m.actor.backward(&c.act_cache, d_mean.view(), g_act).expect("shapes");
        m.encoder.backward(&c.enc_cache, d_in.slice(s![.., ..m.config.latent_dim]), g_enc).expect("shapes");
        let dv = Array2::from_shape_fn((n, 1), |(i, _)| F::cast_from(d_value[i]));
        m.critic.backward(&c.crit_cache, dv.view(), g_crit).expect("shapes");
        for (j, g) in g_ls.iter_mut().enumerate() {
            let s = m.log_std[j].as_f64();
            if s > LOG_STD_MIN && s < LOG_STD_MAX || (s <= LOG_STD_MIN && d_entropy < 0.0) || (s >= LOG_STD_MAX && d_entropy > 0.0) {
                let sum: f64 = (0..n).map(|i| d_log_prob[i] * c.d_ls[[i, j]]).sum();
                *g += F::cast_from(sum + d_entropy);
            }
        }
    }

    fn step(&mut self, max_grad_norm: f64) -> f64 {
        let [g0, g1, g2, g3] = &mut self.grads;
        let norm = clip_grad_norm(&mut [&mut g0[..], &mut g1[..], &mut g2[..], &mut g3[..]], max_grad_norm);
        let m = &mut self.model;
        self.adam[0].step(m.encoder.params_mut(), &self.grads[0]);
        self.adam[1].step(m.actor.params_mut(), &self.grads[1]);
        self.adam[2].step(m.critic.params_mut(), &self.grads[2]);
        self.adam[3].step(&mut m.log_std, &self.grads[3]);
        for v in &mut m.log_std {
            *v = F::cast_from(v.as_f64().clamp(LOG_STD_MIN, LOG_STD_MAX));
        }
        self.zero_grads();
        norm
    }
}
