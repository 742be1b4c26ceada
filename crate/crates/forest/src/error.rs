use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("feature matrix has {len} values, not a multiple of {n_features} features")]
    Shape { len: usize, n_features: usize },
    #[error("{rows} feature rows but {targets} targets")]
    TargetCount { rows: usize, targets: usize },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("invalid parameter: {0}")]
    Param(String),
}

pub type Result<T> = std::result::Result<T, ForestError>;
