use std::path::Path;

use fcev_forest::{BoostingParams, DataView, Forest, ForestParams, GradientBoosting};
use serde::{Deserialize, Serialize};

use super::samples::{to_matrix, ObserverSample};
use crate::container;
use crate::error::{Error, Result};

/// Which learner to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorSpec {
    RandomForest {
        n_trees: usize,
        #[serde(default)]
        max_depth: Option<usize>,
        min_samples_leaf: usize,
        seed: u64,
    },
    GradientBoostedTrees {
        rounds: usize,
        learning_rate: f64,
        max_depth: usize,
        #[serde(default = "one")]
        min_samples_leaf: usize,
        seed: u64,
    },
    /// Trained outside this crate through [`RegressorPlugin`].
    Plugin { name: String, seed: u64 },
}

fn one() -> usize {
    1
}

impl RegressorSpec {
    /// 100 trees with leaves of at least 2 samples.
    pub fn random_forest(seed: u64) -> Self {
        RegressorSpec::RandomForest {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 2,
            seed,
        }
    }

    /// 500 rounds of depth-10 trees at learning rate 0.1.
    pub fn gradient_boosted(seed: u64) -> Self {
        RegressorSpec::GradientBoostedTrees {
            rounds: 500,
            learning_rate: 0.1,
            max_depth: 10,
            min_samples_leaf: 1,
            seed,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            RegressorSpec::RandomForest { .. } => "random_forest",
            RegressorSpec::GradientBoostedTrees { .. } => "gradient_boosted_trees",
            RegressorSpec::Plugin { name, .. } => name,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RegressorSpec::RandomForest {
                n_trees,
                max_depth,
                min_samples_leaf,
                ..
            } => {
                if n_trees == 0 || min_samples_leaf == 0 || max_depth == Some(0) {
                    return Err(Error::Param("random forest counts must be positive".into()));
                }
            }
            RegressorSpec::GradientBoostedTrees {
                rounds,
                learning_rate,
                max_depth,
                min_samples_leaf,
                ..
            } => {
                if rounds == 0 || max_depth == 0 || min_samples_leaf == 0 {
                    return Err(Error::Param("boosting counts must be positive".into()));
                }
                if !(learning_rate > 0.0 && learning_rate <= 1.0) {
                    return Err(Error::Param(format!("learning rate {learning_rate} outside (0, 1]")));
                }
            }
            RegressorSpec::Plugin { .. } => {}
        }
        Ok(())
    }
}

/// A ΔSOC predictor over the five observer features.
pub trait ObserverRegressor: Send + Sync {
    fn predict(&self, features: &[f64; 5]) -> f64;
}

impl<F: Fn(&[f64; 5]) -> f64 + Send + Sync> ObserverRegressor for F {
    fn predict(&self, features: &[f64; 5]) -> f64 {
        self(features)
    }
}

/// Extension point for learners beyond the built-in tree ensembles.
pub trait RegressorPlugin {
    fn name(&self) -> &str;
    fn train(&self, samples: &[ObserverSample], seed: u64) -> Result<Box<dyn ObserverRegressor>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObserverModel {
    RandomForest(Forest),
    GradientBoosting(GradientBoosting),
}

/// A trained built-in regressor with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedObserver {
    pub spec: RegressorSpec,
    pub model: ObserverModel,
    pub train_rmse: f64,
    pub n_samples: usize,
    /// SHA-256 of the training samples.
    pub data_digest: String,
}

const KIND: &str = "observer-regressor";

impl TrainedObserver {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::json!({
            "spec": self.spec,
            "train_rmse": self.train_rmse,
            "n_samples": self.n_samples,
            "data_digest": self.data_digest,
        });
        // The tagged spec lives in the JSON header; bincode cannot read it back.
        container::encode_model(KIND, header, &self.model)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, model) = container::decode_model(bytes, KIND)?;
        let field = |k: &str| header.get(k).cloned().ok_or_else(|| Error::Format(format!("observer header lacks `{k}`")));
        let parse = |e: serde_json::Error| Error::Format(e.to_string());
        Ok(Self {
            spec: serde_json::from_value(field("spec")?).map_err(parse)?,
            model,
            train_rmse: serde_json::from_value(field("train_rmse")?).map_err(parse)?,
            n_samples: serde_json::from_value(field("n_samples")?).map_err(parse)?,
            data_digest: serde_json::from_value(field("data_digest")?).map_err(parse)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }

    pub fn rmse_on(&self, samples: &[ObserverSample]) -> f64 {
        rmse(self, samples)
    }
}

impl ObserverRegressor for TrainedObserver {
    fn predict(&self, f: &[f64; 5]) -> f64 {
        match &self.model {
            ObserverModel::RandomForest(m) => m.predict_row(f),
            ObserverModel::GradientBoosting(m) => m.predict_row(f),
        }
    }
}

pub fn rmse(model: &dyn ObserverRegressor, samples: &[ObserverSample]) -> f64 {
    let se: f64 = samples
        .iter()
        .map(|s| (model.predict(&s.features()) - s.delta_soc).powi(2))
        .sum();
    (se / samples.len().max(1) as f64).sqrt()
}

/// SHA-256 over the little-endian bytes of every sample field.
pub fn samples_digest(samples: &[ObserverSample]) -> String {
    let mut flat = Vec::with_capacity(samples.len() * 6);
    for s in samples {
        flat.extend_from_slice(&s.features());
        flat.push(s.delta_soc);
    }
    container::digest_hex(&container::f64s_to_le_bytes(&flat))
}

/// Trains one of the built-in tree ensembles.
pub fn train_regressor(spec: &RegressorSpec, samples: &[ObserverSample]) -> Result<TrainedObserver> {
    spec.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("observer training set is empty".into()));
    }
    let (x, y) = to_matrix(samples);
    let data = DataView::new(&x, 5, &y)?;
    let model = match *spec {
        RegressorSpec::RandomForest {
            n_trees,
            max_depth,
            min_samples_leaf,
            seed,
        } => {
            if samples.len() < min_samples_leaf {
                return Err(Error::Empty(format!(
                    "{} samples is fewer than the minimum leaf size {min_samples_leaf}",
                    samples.len()
                )));
            }
            let mut p = ForestParams::random_forest(n_trees, min_samples_leaf);
            p.tree.max_depth = max_depth;
            ObserverModel::RandomForest(Forest::fit(&data, &p, seed)?)
        }
        RegressorSpec::GradientBoostedTrees {
            rounds,
            learning_rate,
            max_depth,
            min_samples_leaf,
            seed,
        } => {
            let p = BoostingParams {
                rounds,
                learning_rate,
                max_depth,
                min_samples_leaf,
                ..BoostingParams::default()
            };
            ObserverModel::GradientBoosting(GradientBoosting::fit(&data, &p, seed)?)
        }
        RegressorSpec::Plugin { ref name, .. } => {
            return Err(Error::Param(format!(
                "plugin regressor `{name}` must be trained through its RegressorPlugin"
            )));
        }
    };
    let mut trained = TrainedObserver {
        spec: spec.clone(),
        model,
        train_rmse: 0.0,
        n_samples: samples.len(),
        data_digest: samples_digest(samples),
    };
    trained.train_rmse = rmse(&trained, samples);
    Ok(trained)
}

/// Trains a plugin learner and reports its training RMSE.
pub fn train_with_plugin(
    plugin: &dyn RegressorPlugin,
    samples: &[ObserverSample],
    seed: u64,
) -> Result<(Box<dyn ObserverRegressor>, f64)> {
    if samples.is_empty() {
        return Err(Error::Empty("observer training set is empty".into()));
    }
    let model = plugin.train(samples, seed)?;
    let r = rmse(model.as_ref(), samples);
    Ok((model, r))
}
