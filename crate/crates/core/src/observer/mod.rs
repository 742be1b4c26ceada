//! Offline observer pipeline: simulation logs → ΔSOC samples → tree-ensemble
//! regressor → explicit 5-D table → per-step degree-7 polynomials.

mod poly;
mod regressor;
mod samples;
mod table;

pub use poly::{fit_scaled, fit_soc_polynomial, SocPolynomial, DEGREE};
pub use regressor::{
    rmse, samples_digest, train_regressor, train_with_plugin, ObserverModel, ObserverRegressor, RegressorPlugin,
    RegressorSpec, TrainedObserver,
};
pub use samples::{
    generate_training_set, read_training_csv, split_holdout, write_training_csv, ObserverSample, FEATURE_NAMES,
};
pub use table::{
    build_explicit_table, Axis, Curve1, ExplicitTable, GridSpec, Slice2, Spacing, TableProvenance,
    DEFAULT_POINT_BUDGET,
};
