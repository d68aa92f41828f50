use std::sync::Arc;

use ndarray::Array2;

use crate::env::{Command6D, EnvContext, EpisodeSpec, LocoEnv, ACTION_DIM, PRIVILEGED_DIM, PROPRIO_DIM};
use crate::rl::{ActorCritic, HistoryBuffer, CMD_DIM, CRITIC_DIM};

/// An environment with the observation history its policy consumes.
pub struct Agent {
    pub env: LocoEnv,
    pub history: HistoryBuffer,
}

impl Agent {
    pub fn new(ctx: Arc<EnvContext>, seed: u64, spec: EpisodeSpec, history_len: usize) -> Self {
        let env = LocoEnv::new(ctx, seed, spec);
        let history = HistoryBuffer::new(history_len, env.proprio());
        Self { env, history }
    }

    pub fn reset(&mut self, spec: EpisodeSpec) {
        self.env.reset(spec);
        self.history.reset(self.env.proprio());
    }

    /// Records the observation following `action`.
    pub fn observe(&mut self, action: &[f64]) {
        let clip = self.env.context().config.action_clip;
        let a: Vec<f64> = action.iter().map(|v| if v.is_finite() { v.clamp(-clip, clip) } else { 0.0 }).collect();
        self.history.push(self.env.proprio(), &a);
    }

    pub fn critic_row(&self) -> [f64; CRITIC_DIM] {
        let mut row = [0.0; CRITIC_DIM];
        row[..PROPRIO_DIM].copy_from_slice(self.env.proprio());
        row[PROPRIO_DIM..PROPRIO_DIM + PRIVILEGED_DIM].copy_from_slice(&self.env.privileged());
        row[PROPRIO_DIM + PRIVILEGED_DIM..].copy_from_slice(&self.env.command().to_array());
        row
    }
}

pub fn history_matrix<'a, I: ExactSizeIterator<Item = &'a HistoryBuffer>>(histories: I, width: usize) -> Array2<f32> {
    let n = histories.len();
    let mut m = Array2::zeros((n, width));
    for (mut row, h) in m.rows_mut().into_iter().zip(histories) {
        for (d, s) in row.iter_mut().zip(h.window()) {
            *d = *s as f32;
        }
    }
    m
}

pub fn command_matrix(cmds: &[Command6D]) -> Array2<f32> {
    Array2::from_shape_fn((cmds.len(), CMD_DIM), |(i, j)| cmds[i].to_array()[j] as f32)
}

/// Deterministic (mean) actions for a batch of agents.
pub fn mean_actions(policy: &ActorCritic<f32>, agents: &[&Agent]) -> Vec<[f64; ACTION_DIM]> {
    let hist = history_matrix(agents.iter().map(|a| &a.history), policy.config.history_dim());
    let cmds: Vec<Command6D> = agents.iter().map(|a| a.env.command()).collect();
    let mu = policy.action_mean(hist.view(), command_matrix(&cmds).view()).expect("policy input widths");
    mu.rows().into_iter().map(|r| std::array::from_fn(|j| f64::from(r[j]))).collect()
}
