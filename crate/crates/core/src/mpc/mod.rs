//! Receding-horizon controllers sharing one cost, constraint set and solver.

mod controller;
mod linearize;
mod observer;
mod problem;
mod solver;

pub use linearize::{
    linearize, linearize_step, tmpc_rollout, tmpc_rollout_stacked, BatteryCoefficients, FrozenLinearPredictor,
    LinearizedModel, StepMatrices,
};
pub use observer::{lrmpc_rollout, LinearizedObserver, PolynomialObserver, SocObserver};
pub use problem::{objective, HorizonProblem, HydrogenCoefficients, OperatingPoint, StateCost};
pub use solver::{solve, ControlSolution, SolverSettings, SolverStats};
pub use controller::{
    build_problem, ControlContext, Decision, EnergyController, LrmpcController, MpcConfig, RuleBasedController,
    RuleConfig, RulePolicy, TmpcController, DEFAULT_Q2,
};
