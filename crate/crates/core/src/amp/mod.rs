//! Adversarial motion prior: transition features, expert dataset,
//! least-squares discriminator and style reward.

mod dataset;
mod discriminator;
mod features;

pub use dataset::{check_expert_gate, DatasetMeta, ExpertDataset, DATASET_KIND};
pub use discriminator::{style_reward, AmpConfig, AmpMetrics, Discriminator};
pub use features::{amp_features, AMP_PAIR_DIM, AMP_STATE_DIM};

use crate::archive::ArchiveError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum AmpError {
    #[error("expert dataset is empty")]
    EmptyDataset,
    #[error("expected {expected} feature channels, got {got}")]
    Width { expected: usize, got: usize },
    #[error("expert data contains non-finite values")]
    NonFiniteData,
    #[error("stage-1 policy too weak for expert collection: tracking {score:.3} < {required:.3}")]
    PolicyTooWeak { score: f64, required: f64 },
    #[error("non-finite discriminator loss; parameters unchanged")]
    NonFiniteLoss,
    #[error("dataset metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
