//! Closed-loop simulation, driving cycles and strategy comparison.

mod cycle;
mod pipeline;
mod record;
mod report;
mod sim;

pub use cycle::{
    load_cycle, read_cycle_csv, write_cycle_csv, CycleKind, DrivingCycle, SyntheticCycle, CYCLE_HEADER, MIXED_SEED,
    URBAN_SEED,
};
pub use pipeline::{
    build_table, collect_observer_samples, make_controller, record_logs, run_pipeline, run_sweep, train_observer,
    train_velocity, LoggingConfig, PipelineArtifacts, PipelineConfig,
};
pub use record::{read_step_log, sig9, write_step_log, Mode, StepRecord, STEP_LOG_HEADER};
pub use report::{
    assign_optimality, compare_strategies, emit_results, write_report_json, write_step_log_file, write_sweep_csv,
    ComparisonReport, StrategySummary, REPORT_SCHEMA, REPORT_VERSION, SWEEP_HEADER,
};
pub use sim::{next_hev, power_balance_residual, run_simulation, SimConfig, SimOutcome};
