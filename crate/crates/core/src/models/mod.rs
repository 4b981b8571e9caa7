//! Dense and data-dependent sparse regression models.
//!
//! All models here share one shape: a fixed bottom layer `B` (`t × d`), an
//! activation `σ`, and a trainable top row `A`. A routing rule picks the
//! activated units for each input and the output is
//! `Σ_{j active} A_j σ(b_jᵀx)`.

pub mod dense;
pub mod dsm;
pub mod lsh_learner;
pub mod routing;

pub use dense::{Activation, DenseModel};
pub use dsm::{simulate_interpolation, simulate_knn, DsmModel};
pub use lsh_learner::{calibrate_width, lsh_ensemble_predict, LshLearner};
pub use routing::{block_routing_mask, mask_random_hash, mask_topk, top_k_indices, ExpertMap, RandomHashRouter, RoutingRule};

use crate::error::Result;

/// Activated units of one input, with their feature values `σ(b_jᵀx)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActiveFeatures {
    /// Ascending unit indices.
    pub units: Vec<usize>,
    pub values: Vec<f64>,
}

impl ActiveFeatures {
    pub fn dot_top(&self, top: &[f64]) -> f64 {
        self.units.iter().zip(&self.values).map(|(&j, v)| top[j] * v).sum()
    }
}

/// A model whose only trainable parameters are the top row.
pub trait TopLayerModel: Sync {
    fn input_dim(&self) -> usize;
    fn width(&self) -> usize;
    fn top(&self) -> &[f64];
    fn top_mut(&mut self) -> &mut [f64];
    fn active_features(&self, x: &[f64]) -> Result<ActiveFeatures>;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.active_features(x)?.dot_top(self.top()))
    }

    /// Units active for every input (dense: the width; DSM: the sparsity).
    fn activated_units(&self) -> usize;

    /// Per-input routing overhead, excluding the bottom layer.
    fn routing_flops(&self) -> u64 {
        0
    }
}
