//! Regression tree ensembles used by the observer-learning and velocity
//! pipelines.
//!
//! Everything here is deterministic given a seed: per-tree random streams are
//! derived from the master seed, so parallel and sequential training produce
//! bit-identical models.

mod binning;
mod boosting;
mod data;
mod error;
mod forest;
mod seed;
mod tree;

pub use binning::BinnedMatrix;
pub use boosting::{BoostingParams, GradientBoosting};
pub use data::DataView;
pub use error::{ForestError, Result};
pub use forest::{Forest, ForestParams};
pub use seed::derive_seed;
pub use tree::{MaxFeatures, Node, RegressionTree, Splitter, TreeParams};

/// Anything that maps a feature row to a scalar.
pub trait Regressor: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> f64;

    /// Predicts every row of a row-major matrix.
    fn predict(&self, x: &[f64]) -> Vec<f64> {
        let m = self.n_features();
        x.chunks_exact(m).map(|r| self.predict_row(r)).collect()
    }
}
