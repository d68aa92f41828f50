use serde::{Deserialize, Serialize};

use crate::env::{ACTION_DIM, PROPRIO_DIM};

/// Width of one history entry: an observation and the action that preceded it.
pub const HISTORY_STEP_DIM: usize = PROPRIO_DIM + ACTION_DIM;

/// Sliding window of the last `len` (observation, previous action) pairs,
/// oldest first. A reset fills every slot with the first observation and a
/// zero action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryBuffer {
    len: usize,
    data: Vec<f64>,
}

impl HistoryBuffer {
    pub fn new(len: usize, first_obs: &[f64]) -> Self {
        assert!(len > 0);
        let mut h = Self { len, data: vec![0.0; len * HISTORY_STEP_DIM] };
        h.reset(first_obs);
        h
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn reset(&mut self, first_obs: &[f64]) {
        assert_eq!(first_obs.len(), PROPRIO_DIM);
        for chunk in self.data.chunks_exact_mut(HISTORY_STEP_DIM) {
            chunk[..PROPRIO_DIM].copy_from_slice(first_obs);
            chunk[PROPRIO_DIM..].fill(0.0);
        }
    }

    pub fn push(&mut self, obs: &[f64], prev_action: &[f64]) {
        assert_eq!(obs.len(), PROPRIO_DIM);
        assert_eq!(prev_action.len(), ACTION_DIM);
        self.data.copy_within(HISTORY_STEP_DIM.., 0);
        let n = self.data.len();
        let last = &mut self.data[n - HISTORY_STEP_DIM..];
        last[..PROPRIO_DIM].copy_from_slice(obs);
        last[PROPRIO_DIM..].copy_from_slice(prev_action);
    }

    pub fn window(&self) -> &[f64] {
        &self.data
    }
}
