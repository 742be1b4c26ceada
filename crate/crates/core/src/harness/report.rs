use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cycle::DrivingCycle;
use super::record::{sig9, write_step_log, StepRecord};
use super::sim::{run_simulation, SimConfig, SimOutcome};
use crate::error::{Error, Result};
use crate::mpc::EnergyController;
use crate::powertrain::Plant;
use crate::velocity::SpeedPredictor;

pub const REPORT_VERSION: u32 = 1;

/// Published JSON schema for [`ComparisonReport`].
pub const REPORT_SCHEMA: &str = include_str!("../../schema/comparison_report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub name: String,
    pub horizon: Option<usize>,
    /// g
    pub h2_equiv: f64,
    /// g
    pub h2_fc: f64,
    pub final_soc: f64,
    /// s
    pub total_sim_time: f64,
    /// s
    pub mean_solve_time: f64,
    /// s
    pub max_solve_time: f64,
    pub hev_steps: usize,
    /// Saving against the worst strategy in the same group, %.
    pub optimality_pct: f64,
}

impl StrategySummary {
    pub fn from_outcome(outcome: &SimOutcome, horizon: Option<usize>) -> Self {
        Self {
            name: outcome.strategy.clone(),
            horizon,
            h2_equiv: outcome.h2_equiv,
            h2_fc: outcome.h2_fc,
            final_soc: outcome.final_soc,
            total_sim_time: outcome.wall_time,
            mean_solve_time: outcome.mean_solve_time,
            max_solve_time: outcome.max_solve_time,
            hev_steps: outcome.hev_steps,
            optimality_pct: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: u32,
    pub cycle: String,
    pub seed: u64,
    pub strategies: Vec<StrategySummary>,
}

/// Sets 100·(h2_worst − h2)/h2_worst within each horizon group; the worst
/// strategy of a group scores 0.
pub fn assign_optimality(summaries: &mut [StrategySummary]) {
    let mut groups: Vec<Option<usize>> = summaries.iter().map(|s| s.horizon).collect();
    groups.dedup();
    for g in groups {
        let worst = summaries
            .iter()
            .filter(|s| s.horizon == g)
            .map(|s| s.h2_equiv)
            .fold(f64::NEG_INFINITY, f64::max);
        for s in summaries.iter_mut().filter(|s| s.horizon == g) {
            s.optimality_pct = if worst != 0.0 { 100.0 * (worst - s.h2_equiv) / worst } else { 0.0 };
        }
    }
}

/// Runs every controller on the same cycle and configuration, one after the
/// other so that solve times are not disturbed by each other.
pub fn compare_strategies(
    cycle: &DrivingCycle,
    config: &SimConfig,
    plant: &Plant,
    controllers: &mut [Box<dyn EnergyController>],
    predictor: &dyn SpeedPredictor,
) -> Result<(ComparisonReport, Vec<SimOutcome>)> {
    if controllers.len() < 2 {
        return Err(Error::Param(format!("need at least 2 strategies, got {}", controllers.len())));
    }
    let mut outcomes = Vec::with_capacity(controllers.len());
    for c in controllers.iter_mut() {
        outcomes.push(run_simulation(cycle, config, plant, c.as_mut(), predictor)?);
    }
    let mut strategies: Vec<StrategySummary> = outcomes.iter().map(|o| StrategySummary::from_outcome(o, None)).collect();
    assign_optimality(&mut strategies);
    Ok((
        ComparisonReport {
            version: REPORT_VERSION,
            cycle: cycle.name.clone(),
            seed: config.seed,
            strategies,
        },
        outcomes,
    ))
}

pub const SWEEP_HEADER: [&str; 7] = [
    "strategy",
    "horizon",
    "h2_equiv_g",
    "optimality_pct",
    "total_sim_time_s",
    "mean_solve_time_s",
    "final_soc",
];

/// One row per (strategy, horizon), sorted by horizon then by input order.
/// `mask_timing` zeroes the wall-clock columns.
pub fn write_sweep_csv(path: &Path, rows: &[StrategySummary], mask_timing: bool) -> Result<()> {
    let mut s = SWEEP_HEADER.join(",");
    s.push('\n');
    for r in rows {
        let (total, mean) = if mask_timing { (0.0, 0.0) } else { (r.total_sim_time, r.mean_solve_time) };
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.name,
            r.horizon.map(|h| h.to_string()).unwrap_or_default(),
            sig9(r.h2_equiv),
            sig9(r.optimality_pct),
            sig9(total),
            sig9(mean),
            sig9(r.final_soc)
        ));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_report_json(path: &Path, report: &ComparisonReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_step_log_file(path: &Path, records: &[StepRecord], mask_timing: bool) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_step_log(std::io::BufWriter::new(file), records, mask_timing)
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn emit_results(
    dir: &Path,
    stem: &str,
    records: &[StepRecord],
    report: &ComparisonReport,
    mask_timing: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_step_log_file(&dir.join(format!("{stem}.csv")), records, mask_timing)?;
    write_report_json(&dir.join(format!("{stem}.json")), report)
}
