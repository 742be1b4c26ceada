use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} outside [{min}, {max}]")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("battery cannot deliver {p_batt:.1} W at SOC {soc:.4} (discriminant {discriminant:.3e})")]
    InfeasiblePower {
        p_batt: f64,
        soc: f64,
        discriminant: f64,
    },

    #[error("linearization infeasible at P_batt = {p_batt:.1} W: discriminant {discriminant:.3e} <= 0")]
    Linearization { p_batt: f64, discriminant: f64 },

    #[error("step {step}: control {value} outside polynomial domain [{lo}, {hi}]")]
    Domain { step: usize, value: f64, lo: f64, hi: f64 },

    #[error("polynomial fit failed: {0}")]
    Fit(String),

    #[error("grid of {product} points exceeds the budget of {budget} points")]
    Budget { product: usize, budget: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty data: {0}")]
    Empty(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{source_name} line {line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Forest(#[from] fcev_forest::ForestError),

    #[error("step {step} at t = {t:.2} s failed ({state}): {source}")]
    Step {
        step: usize,
        t: f64,
        state: String,
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn range(what: impl Into<String>, value: f64, min: f64, max: f64) -> Self {
        Error::Range {
            what: what.into(),
            value,
            min,
            max,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure is a feasibility problem rather than a bug or I/O.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::InfeasiblePower { .. } | Error::Linearization { .. } | Error::Infeasible(_) => true,
            Error::Step { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}
