use fcev_forest::{derive_seed, DataView, Forest, ForestParams, MaxFeatures, Regressor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-grained scanning over a lag feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MgspConfig {
    /// Raw feature length m.
    pub feature_dim: usize,
    /// Scanning window n.
    pub window: usize,
    /// Outputs per window per forest kind, p.
    pub output_dim: usize,
    pub trees_per_forest: usize,
    pub min_samples_leaf: usize,
}

impl Default for MgspConfig {
    fn default() -> Self {
        Self {
            feature_dim: 10,
            window: 5,
            output_dim: 1,
            trees_per_forest: 100,
            min_samples_leaf: 5,
        }
    }
}

impl MgspConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.window && self.window <= self.feature_dim) {
            return Err(Error::Param(format!(
                "scanning window {} must lie in 1..={}",
                self.window, self.feature_dim
            )));
        }
        if self.output_dim == 0 || self.trees_per_forest == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Param("output_dim, trees_per_forest and min_samples_leaf must be positive".into()));
        }
        Ok(())
    }

    pub fn n_windows(&self) -> usize {
        self.feature_dim - self.window + 1
    }

    /// 2·p·(m − n + 1)
    pub fn output_len(&self) -> usize {
        2 * self.output_dim * self.n_windows()
    }
}

/// Slides the window over `raw` and concatenates, window by window, the
/// outputs of the completely-random then the random forests (p each).
pub fn mgs_transform<R: Regressor>(config: &MgspConfig, raw: &[f64], forests: &[Vec<R>; 2]) -> Result<Vec<f64>> {
    config.validate()?;
    if raw.len() != config.feature_dim {
        return Err(Error::Shape(format!(
            "raw feature vector has length {}, expected {}",
            raw.len(),
            config.feature_dim
        )));
    }
    for kind in forests {
        if kind.len() != config.output_dim {
            return Err(Error::Shape(format!("{} forests per kind, expected {}", kind.len(), config.output_dim)));
        }
    }
    let mut out = Vec::with_capacity(config.output_len());
    for w in raw.windows(config.window) {
        for kind in forests {
            out.extend(kind.iter().map(|f| f.predict_row(w)));
        }
    }
    Ok(out)
}

pub(crate) fn forest_params(kind: usize, trees: usize, min_leaf: usize) -> ForestParams {
    if kind == 0 {
        ForestParams::completely_random(trees, min_leaf)
    } else {
        let mut p = ForestParams::random_forest(trees, min_leaf);
        p.tree.max_features = MaxFeatures::Sqrt;
        p
    }
}

/// Windowed training set: each sample contributes one row per window.
fn window_rows(config: &MgspConfig, x: &[f64], y: &[f64], rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let m = config.feature_dim;
    let mut wx = Vec::with_capacity(rows.len() * config.n_windows() * config.window);
    let mut wy = Vec::with_capacity(rows.len() * config.n_windows());
    for &r in rows {
        for w in x[r * m..(r + 1) * m].windows(config.window) {
            wx.extend_from_slice(w);
            wy.push(y[r]);
        }
    }
    (wx, wy)
}

pub(crate) fn fit_window_forests(
    config: &MgspConfig,
    x: &[f64],
    y: &[f64],
    rows: &[usize],
    seed: u64,
) -> Result<[Vec<Forest>; 2]> {
    let (wx, wy) = window_rows(config, x, y, rows);
    let data = DataView::new(&wx, config.window, &wy)?;
    let fit_kind = |kind: usize| -> Result<Vec<Forest>> {
        (0..config.output_dim)
            .map(|j| {
                let params = forest_params(kind, config.trees_per_forest, config.min_samples_leaf);
                Ok(Forest::fit(&data, &params, derive_seed(seed, (kind * config.output_dim + j) as u64))?)
            })
            .collect()
    };
    Ok([fit_kind(0)?, fit_kind(1)?])
}
