//! Small dense-network toolkit: MLPs with analytic gradients (including
//! the parameter gradient of an input-gradient penalty), Adam, and a
//! diagonal Gaussian policy head.

mod adam;
mod gaussian;
mod mlp;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::Float;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use gaussian::{gaussian_entropy, gaussian_log_prob, gaussian_policy, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{param_count, Activation, Mlp, MlpCache};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Floating-point element type of networks and optimizers.
pub trait Scalar:
    LinalgScalar + ScalarOperand + Float + AddAssign + SubAssign + MulAssign + Send + Sync + Debug + Default + 'static
{
    const DTYPE: &'static str;
    fn cast_from(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    fn cast_from(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    fn cast_from(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}
