//! Energy management for a fuel-cell/battery four-wheel-drive vehicle.
//!
//! The plant lives in [`powertrain`]; [`mpc`] holds the two receding-horizon
//! controllers (a linearized one and one driven by an explicit ΔSOC table
//! from [`observer`]); [`velocity`] predicts the demand-power reference; and
//! [`harness`] runs the closed loop and compares strategies.

pub mod container;
pub mod error;
pub mod harness;
pub mod mpc;
pub mod observer;
pub mod powertrain;
pub mod velocity;

pub use error::{Error, Result};
