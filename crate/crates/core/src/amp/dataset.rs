use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AmpError, AMP_PAIR_DIM};
use crate::archive::Archive;

pub const DATASET_KIND: &str = "expert-dataset";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Digest of the policy checkpoint that generated the data.
    pub policy_digest: String,
    pub seed: u64,
    /// Tracking score the policy reached at the collection gate.
    pub gate_score: f64,
}

/// Expert transition pairs with per-channel normalization statistics
/// computed on the expert data alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertDataset {
    pairs: Array2<f64>,
    mean: Vec<f64>,
    std: Vec<f64>,
    pub meta: DatasetMeta,
}

/// Accepts a policy for expert collection only if its mean velocity-tracking
/// reward (max 1) reaches `threshold`.
pub fn check_expert_gate(score: f64, threshold: f64) -> Result<(), AmpError> {
    if score >= threshold {
        Ok(())
    } else {
        Err(AmpError::PolicyTooWeak { score, required: threshold })
    }
}

impl ExpertDataset {
    pub fn new(pairs: Array2<f64>, meta: DatasetMeta) -> Result<Self, AmpError> {
        if pairs.nrows() == 0 {
            return Err(AmpError::EmptyDataset);
        }
        if pairs.ncols() != AMP_PAIR_DIM {
            return Err(AmpError::Width { expected: AMP_PAIR_DIM, got: pairs.ncols() });
        }
        if pairs.iter().any(|v| !v.is_finite()) {
            return Err(AmpError::NonFiniteData);
        }
        let mean = pairs.mean_axis(Axis(0)).expect("non-empty").to_vec();
        // Constant channels get unit scale so they normalize to zero.
        let std = pairs.std_axis(Axis(0), 0.0).iter().map(|&s| if s > 1e-8 { s } else { 1.0 }).collect();
        Ok(Self { pairs, mean, std, meta })
    }

    pub fn len(&self) -> usize {
        self.pairs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pairs(&self) -> &Array2<f64> {
        &self.pairs
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Applies the expert statistics to any batch of pairs.
    pub fn normalize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    /// Normalized rows drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        self.normalize(self.pairs.select(Axis(0), &idx).view())
    }

    pub fn to_archive(&self) -> Archive {
        let meta = serde_json::to_value(&self.meta).expect("meta serializes");
        let mut a = Archive::new(DATASET_KIND, &self.meta.policy_digest, meta);
        a.push("pairs", &[self.len(), AMP_PAIR_DIM], self.pairs.as_slice().expect("standard layout"));
        a.push("mean", &[AMP_PAIR_DIM], &self.mean);
        a.push("std", &[AMP_PAIR_DIM], &self.std);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self, AmpError> {
        a.expect_kind(DATASET_KIND)?;
        let meta: DatasetMeta = serde_json::from_value(a.header.meta.clone()).map_err(|e| AmpError::Metadata(e.to_string()))?;
        let (data, shape) = a.get::<f64>("pairs")?;
        if shape.len() != 2 {
            return Err(AmpError::Width { expected: AMP_PAIR_DIM, got: 0 });
        }
        let pairs = Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| AmpError::Metadata(e.to_string()))?;
        let ds = Self::new(pairs, meta)?;
        // Stored statistics must agree with the data they describe.
        if a.get::<f64>("mean")?.0 != ds.mean || a.get::<f64>("std")?.0 != ds.std {
            return Err(AmpError::Metadata("normalization statistics do not match data".into()));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<(), AmpError> {
        Ok(self.to_archive().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, AmpError> {
        Self::from_archive(&Archive::load(path)?)
    }
}
