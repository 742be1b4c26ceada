use serde::{Deserialize, Serialize};

use crate::binning::BinnedMatrix;
use crate::data::DataView;
use crate::error::{ForestError, Result};
use crate::seed::derive_seed;
use crate::tree::{MaxFeatures, RegressionTree, Splitter, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 regularisation on leaf weights (second-order squared-loss step).
    pub lambda: f64,
    pub max_bins: usize,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            rounds: 500,
            learning_rate: 0.1,
            max_depth: 10,
            min_samples_leaf: 1,
            lambda: 1.0,
            max_bins: 1024,
        }
    }
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(ForestError::Param("rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(ForestError::Param("learning_rate must be in (0, 1]".into()));
        }
        if self.max_depth == 0 {
            return Err(ForestError::Param("max_depth must be >= 1".into()));
        }
        self.tree_params().validate()
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: Some(self.max_depth),
            min_samples_leaf: self.min_samples_leaf,
            max_features: MaxFeatures::All,
            splitter: Splitter::Best,
            leaf_l2: self.lambda,
            max_bins: self.max_bins,
        }
    }
}

/// Gradient-boosted regression trees under squared loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    n_features: usize,
    base: f64,
    learning_rate: f64,
    trees: Vec<RegressionTree>,
    train_rmse: f64,
}

impl GradientBoosting {
    pub fn fit(data: &DataView<'_>, params: &BoostingParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let n = data.n_rows();
        let binned = BinnedMatrix::new(data, params.max_bins);
        let tp = params.tree_params();
        let base = data.y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base; n];
        let mut resid = vec![0.0; n];
        let mut trees = Vec::with_capacity(params.rounds);
        for round in 0..params.rounds {
            for i in 0..n {
                resid[i] = data.y[i] - pred[i];
            }
            let rows: Vec<u32> = (0..n as u32).collect();
            let tree =
                RegressionTree::fit_binned(&binned, &resid, rows, &tp, derive_seed(seed, round as u64));
            for (i, p) in pred.iter_mut().enumerate() {
                *p += params.learning_rate * tree.predict_row(data.row(i));
            }
            let single_leaf = tree.nodes().len() == 1;
            trees.push(tree);
            // Residuals are pure: nothing left to fit.
            if single_leaf && resid.iter().all(|r| r.abs() <= 1e-15 * base.abs().max(1e-300)) {
                break;
            }
        }
        let mse = data
            .y
            .iter()
            .zip(&pred)
            .map(|(y, p)| (y - p).powi(2))
            .sum::<f64>()
            / n as f64;
        Ok(Self {
            n_features: data.n_features,
            base,
            learning_rate: params.learning_rate,
            trees,
            train_rmse: mse.sqrt(),
        })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn train_rmse(&self) -> f64 {
        self.train_rmse
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in &self.trees {
            s += t.predict_row(row);
        }
        self.base + self.learning_rate * s
    }
}

impl crate::Regressor for GradientBoosting {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        GradientBoosting::predict_row(self, row)
    }
}
