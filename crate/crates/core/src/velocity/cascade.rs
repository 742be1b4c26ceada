use std::path::Path;

use fcev_forest::{derive_seed, DataView, Forest};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::mgsp::{fit_window_forests, forest_params, mgs_transform, MgspConfig};
use crate::container;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    pub mgsp: MgspConfig,
    pub max_layers: usize,
    pub trees_per_forest: usize,
    pub min_samples_leaf: usize,
    pub cv_folds: usize,
    /// Minimum relative drop in CV error for a new layer to be kept.
    pub epsilon: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            mgsp: MgspConfig::default(),
            max_layers: 20,
            trees_per_forest: 100,
            min_samples_leaf: 10,
            cv_folds: 3,
            epsilon: 0.01,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        self.mgsp.validate()?;
        if self.max_layers == 0 || self.trees_per_forest == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Param("max_layers, trees_per_forest and min_samples_leaf must be positive".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Param("cv_folds must be at least 2".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Param("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Two completely-random and two random forests.
pub const FORESTS_PER_LAYER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeLayer {
    pub forests: Vec<Forest>,
    /// Cross-validated RMSE of the layer's averaged output.
    pub cv_rmse: f64,
}

/// Multi-grained scanning front end plus a cascade of forest layers; maps a
/// raw lag vector to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeForestModel {
    pub config: CascadeConfig,
    pub scan_forests: [Vec<Forest>; 2],
    pub layers: Vec<CascadeLayer>,
    pub seed: u64,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let se: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (se / a.len() as f64).sqrt()
}

fn folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % k].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in fold {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

fn gather(x: &[f64], width: usize, rows: &[usize]) -> Vec<f64> {
    rows.iter().flat_map(|&r| x[r * width..(r + 1) * width].iter().copied()).collect()
}

/// Trains the cascade on a row-major matrix of raw lag vectors.
///
/// Scanning features for the cascade come from out-of-fold forests. Layers
/// are added while the out-of-fold RMSE keeps dropping by more than
/// `epsilon`; the first layer that does not is discarded.
pub fn train_cascade(x: &[f64], y: &[f64], config: &CascadeConfig, seed: u64) -> Result<CascadeForestModel> {
    config.validate()?;
    let m = config.mgsp.feature_dim;
    DataView::new(x, m, y)?;
    let n = y.len();
    if n < config.cv_folds {
        return Err(Error::Param(format!("{n} samples for {} folds", config.cv_folds)));
    }
    let fold_sets = folds(n, config.cv_folds, derive_seed(seed, 1));
    let train_sets: Vec<Vec<usize>> = fold_sets.iter().map(|f| complement(n, f)).collect();

    let scan_len = config.mgsp.output_len();
    let mut scan = vec![0.0; n * scan_len];
    for (fi, (held, train)) in fold_sets.iter().zip(&train_sets).enumerate() {
        let forests = fit_window_forests(&config.mgsp, x, y, train, derive_seed(seed, 100 + fi as u64))?;
        for &r in held {
            let t = mgs_transform(&config.mgsp, &x[r * m..(r + 1) * m], &forests)?;
            scan[r * scan_len..(r + 1) * scan_len].copy_from_slice(&t);
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let scan_forests = fit_window_forests(&config.mgsp, x, y, &all, derive_seed(seed, 200))?;

    let base_len = m + scan_len;
    let base: Vec<f64> = (0..n)
        .flat_map(|r| x[r * m..(r + 1) * m].iter().chain(&scan[r * scan_len..(r + 1) * scan_len]).copied().collect::<Vec<_>>())
        .collect();

    let mut layers: Vec<CascadeLayer> = Vec::new();
    let mut aug: Vec<f64> = Vec::new();
    let mut best = f64::INFINITY;
    for layer_idx in 0..config.max_layers {
        let width = if layers.is_empty() { base_len } else { base_len + FORESTS_PER_LAYER };
        let input: Vec<f64> = if layers.is_empty() {
            base.clone()
        } else {
            (0..n)
                .flat_map(|r| {
                    base[r * base_len..(r + 1) * base_len]
                        .iter()
                        .chain(&aug[r * FORESTS_PER_LAYER..(r + 1) * FORESTS_PER_LAYER])
                        .copied()
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let layer_seed = derive_seed(seed, 1000 + layer_idx as u64);
        let mut oof = vec![0.0; n * FORESTS_PER_LAYER];
        let mut forests = Vec::with_capacity(FORESTS_PER_LAYER);
        for k in 0..FORESTS_PER_LAYER {
            let params = forest_params(k / 2, config.trees_per_forest, config.min_samples_leaf);
            let kind_seed = derive_seed(layer_seed, k as u64);
            for (fi, (held, train)) in fold_sets.iter().zip(&train_sets).enumerate() {
                let tx = gather(&input, width, train);
                let ty: Vec<f64> = train.iter().map(|&r| y[r]).collect();
                let f = Forest::fit(&DataView::new(&tx, width, &ty)?, &params, derive_seed(kind_seed, 10 + fi as u64))?;
                for &r in held {
                    oof[r * FORESTS_PER_LAYER + k] = f.predict_row(&input[r * width..(r + 1) * width]);
                }
            }
            forests.push(Forest::fit(&DataView::new(&input, width, y)?, &params, kind_seed)?);
        }
        let avg: Vec<f64> = oof.chunks_exact(FORESTS_PER_LAYER).map(|c| c.iter().sum::<f64>() / FORESTS_PER_LAYER as f64).collect();
        let err = rmse(&avg, y);
        if !layers.is_empty() && !(err < best * (1.0 - config.epsilon)) {
            break;
        }
        best = err;
        layers.push(CascadeLayer { forests, cv_rmse: err });
        aug = oof;
        if best == 0.0 {
            break;
        }
    }
    Ok(CascadeForestModel {
        config: config.clone(),
        scan_forests,
        layers,
        seed,
    })
}

const KIND: &str = "velocity-cascade";

impl CascadeForestModel {
    pub fn final_depth(&self) -> usize {
        self.layers.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.config.mgsp.feature_dim
    }

    pub fn predict_raw(&self, raw: &[f64]) -> Result<f64> {
        let scan = mgs_transform(&self.config.mgsp, raw, &self.scan_forests)?;
        let mut input: Vec<f64> = raw.iter().chain(&scan).copied().collect();
        let base_len = input.len();
        let mut out = [0.0; FORESTS_PER_LAYER];
        for (li, layer) in self.layers.iter().enumerate() {
            if li > 0 {
                input.truncate(base_len);
                input.extend_from_slice(&out);
            }
            for (k, f) in layer.forests.iter().enumerate() {
                out[k] = f.predict_row(&input);
            }
        }
        Ok(out.iter().sum::<f64>() / FORESTS_PER_LAYER as f64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = json!({
            "final_depth": self.final_depth(),
            "seed": self.seed,
            "feature_dim": self.feature_dim(),
        });
        container::encode_model(KIND, header, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(container::decode_model(bytes, KIND)?.1)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CascadeConfig {
        CascadeConfig {
            mgsp: MgspConfig {
                feature_dim: 4,
                window: 2,
                trees_per_forest: 8,
                min_samples_leaf: 2,
                ..Default::default()
            },
            trees_per_forest: 8,
            min_samples_leaf: 2,
            max_layers: 5,
            ..Default::default()
        }
    }

    #[test]
    fn constant_target_gives_one_layer() {
        let x: Vec<f64> = (0..120).map(|i| (i % 7) as f64).collect();
        let y = vec![1.5; 30];
        let model = train_cascade(&x, &y, &small(), 3).unwrap();
        assert_eq!(model.final_depth(), 1);
        assert_eq!(model.predict_raw(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.5);
    }

    #[test]
    fn layer_cap_is_respected() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 37) % 11) as f64).collect();
        let y: Vec<f64> = x.chunks(4).map(|r| r[0] - 0.5 * r[3]).collect();
        let mut cfg = small();
        cfg.max_layers = 1;
        assert_eq!(train_cascade(&x, &y, &cfg, 5).unwrap().final_depth(), 1);
    }
}
