//! Node features: the observation view (log-normalization + PCA), the
//! knowledge view (GO term enrichment z-scores), their concatenation, and
//! per-edge feature vectors.

mod export;
mod go;
mod matrix;
mod normalize;
mod pca;

pub use export::{read_binary, FeatureShape};
pub use go::{go_enrichment, GoModel};
pub use matrix::{edge_features, fuse, FeatureMatrix, View};
pub use normalize::log_normalize;
pub use pca::{pca, PcaModel, PcaSolver, EXACT_PCA_MAX_GENES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub pca_dim: usize,
    pub go_dim: usize,
    pub normalize_target_sum: f64,
    /// Set by the pipeline from the global seed.
    #[serde(skip_deserializing)]
    pub pca_seed: u64,
    pub pca_solver: PcaSolver,
    /// Count a gene toward every ancestor of its annotated terms.
    pub propagate_go_annotations: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pca_dim: 50,
            go_dim: 200,
            normalize_target_sum: 1e4,
            pca_seed: 0,
            pca_solver: PcaSolver::Auto,
            propagate_go_annotations: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.normalize_target_sum > 0.0 && self.normalize_target_sum.is_finite()) {
            return Err(Error::Config("normalize_target_sum must be positive".into()));
        }
        if self.pca_dim == 0 {
            return Err(Error::Config("pca_dim must be at least 1".into()));
        }
        Ok(())
    }
}
