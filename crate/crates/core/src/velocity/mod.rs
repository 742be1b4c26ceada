//! One-second-ahead speed prediction with a deep forest, and conversion of
//! predicted speeds into the controller's demand-power reference.

mod cascade;
mod mgsp;
mod predict;

pub use cascade::{train_cascade, CascadeConfig, CascadeForestModel, CascadeLayer, FORESTS_PER_LAYER};
pub use mgsp::{mgs_transform, MgspConfig};
pub use predict::{
    evaluate_horizon, lag_training_set, metrics, predict_horizon, predict_seconds, to_demand_power,
    train_velocity_model, DeepForestPredictor, ErrorMetrics, LagWindow, MemoPredictor, OneStep, PersistencePredictor,
    SpeedPredictor,
};
