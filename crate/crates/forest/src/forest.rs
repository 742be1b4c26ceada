use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::BinnedMatrix;
use crate::data::DataView;
use crate::error::{ForestError, Result};
use crate::seed::derive_seed;
use crate::tree::{RegressionTree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    /// Draw a bootstrap resample per tree.
    pub bootstrap: bool,
}

impl ForestParams {
    /// Bagged CART trees.
    pub fn random_forest(n_trees: usize, min_samples_leaf: usize) -> Self {
        Self {
            n_trees,
            tree: TreeParams {
                min_samples_leaf,
                ..TreeParams::default()
            },
            bootstrap: true,
        }
    }

    /// Completely-random trees: random feature, random cut, no bootstrap.
    pub fn completely_random(n_trees: usize, min_samples_leaf: usize) -> Self {
        Self {
            n_trees,
            tree: TreeParams {
                min_samples_leaf,
                splitter: crate::Splitter::Random,
                ..TreeParams::default()
            },
            bootstrap: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(ForestError::Param("n_trees must be >= 1".into()));
        }
        self.tree.validate()
    }
}

/// Averaging ensemble of regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    n_features: usize,
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn fit(data: &DataView<'_>, params: &ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let binned = BinnedMatrix::new(data, params.tree.max_bins);
        Ok(Self::fit_binned(&binned, data.y, params, seed))
    }

    pub(crate) fn fit_binned(
        binned: &BinnedMatrix,
        targets: &[f64],
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let n = binned.n_rows();
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let tree_seed = derive_seed(seed, t as u64);
                let rows: Vec<u32> = if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tree_seed, u64::MAX));
                    let mut rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
                    rows.sort_unstable();
                    rows
                } else {
                    (0..n as u32).collect()
                };
                RegressionTree::fit_binned(binned, targets, rows, &params.tree, tree_seed)
            })
            .collect();
        Self {
            n_features: binned.n_features(),
            trees,
        }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        s / self.trees.len() as f64
    }
}

impl crate::Regressor for Forest {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        Forest::predict_row(self, row)
    }
}
