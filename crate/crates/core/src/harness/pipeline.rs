use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cycle::{CycleKind, DrivingCycle, SyntheticCycle};
use super::report::{assign_optimality, write_report_json, write_step_log_file, write_sweep_csv, ComparisonReport, StrategySummary, REPORT_VERSION};
use super::sim::{run_simulation, SimConfig, SimOutcome};
use crate::error::{Error, Result};
use crate::mpc::{EnergyController, LrmpcController, MpcConfig, RuleBasedController, RuleConfig, TmpcController};
use crate::observer::{
    build_explicit_table, generate_training_set, split_holdout, train_regressor, ExplicitTable, GridSpec,
    ObserverSample, RegressorSpec, TableProvenance, TrainedObserver, DEFAULT_POINT_BUDGET,
};
use crate::powertrain::Plant;
use crate::velocity::{train_velocity_model, CascadeConfig, DeepForestPredictor, MemoPredictor, PersistencePredictor, SpeedPredictor};

/// How observer training data is recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoggingConfig {
    pub cycles: Vec<SyntheticCycle>,
    /// Controller driving the logging runs (a dither excites the split).
    pub rule: RuleConfig,
    /// Keep every n-th sample.
    pub subsample: usize,
    pub holdout: f64,
}

impl Default for LoggingConfig {
    fn default() -> Self {
        Self {
            cycles: vec![
                SyntheticCycle {
                    kind: CycleKind::Urban,
                    seed: 101,
                    ..Default::default()
                },
                SyntheticCycle {
                    kind: CycleKind::Mixed,
                    seed: 102,
                    ..Default::default()
                },
            ],
            rule: RuleConfig {
                dither_amplitude: 15_000.0,
                dither_hold: 40,
                ..Default::default()
            },
            subsample: 4,
            holdout: 0.2,
        }
    }
}

/// Configuration of the full train → table → sweep pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub sim: SimConfig,
    pub mpc: MpcConfig,
    pub logging: LoggingConfig,
    pub regressor: RegressorSpec,
    /// Points per table axis: p_batt, p_load, u_batt, r_batt, p_fc.
    pub grid: [usize; 5],
    pub point_budget: usize,
    pub velocity: CascadeConfig,
    pub velocity_cycles: Vec<SyntheticCycle>,
    /// Cycle the sweep runs on.
    pub cycle: SyntheticCycle,
    pub horizons: Vec<usize>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            mpc: MpcConfig::default(),
            logging: LoggingConfig::default(),
            regressor: RegressorSpec::random_forest(0),
            grid: [9, 15, 7, 7, 9],
            point_budget: DEFAULT_POINT_BUDGET,
            velocity: CascadeConfig::default(),
            velocity_cycles: vec![
                SyntheticCycle {
                    kind: CycleKind::Urban,
                    seed: 201,
                    ..Default::default()
                },
                SyntheticCycle {
                    kind: CycleKind::Mixed,
                    seed: 202,
                    ..Default::default()
                },
            ],
            cycle: SyntheticCycle::bundled(CycleKind::Mixed),
            horizons: vec![5, 10, 15, 20, 25, 30],
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    /// The regressor spec with its seed replaced by the pipeline seed.
    pub fn seeded_regressor(&self) -> RegressorSpec {
        let mut spec = self.regressor.clone();
        match &mut spec {
            RegressorSpec::RandomForest { seed, .. }
            | RegressorSpec::GradientBoostedTrees { seed, .. }
            | RegressorSpec::Plugin { seed, .. } => *seed = self.seed,
        }
        spec
    }
}

/// Closed-loop logs of the rule-based controller on one cycle.
pub fn record_logs(plant: &Plant, cycle: &DrivingCycle, sim: &SimConfig, rule: &RuleConfig) -> Result<SimOutcome> {
    let mut ctl = RuleBasedController::new(rule.clone());
    run_simulation(cycle, sim, plant, &mut ctl, &PersistencePredictor)
}

/// ΔSOC samples from every logging cycle, thinned by `subsample`.
pub fn collect_observer_samples(plant: &Plant, sim: &SimConfig, logging: &LoggingConfig, seed: u64) -> Result<Vec<ObserverSample>> {
    let mut out = Vec::new();
    for (i, c) in logging.cycles.iter().enumerate() {
        let cycle = c.generate(&plant.vehicle)?;
        let rule = RuleConfig {
            seed: fcev_forest::derive_seed(seed, i as u64),
            ..logging.rule.clone()
        };
        let logs = record_logs(plant, &cycle, sim, &rule)?;
        let samples = generate_training_set(&logs.records)?;
        out.extend(samples.into_iter().step_by(logging.subsample.max(1)));
    }
    Ok(out)
}

/// Trains on a shuffled split and returns the model with its held-out RMSE.
pub fn train_observer(
    samples: &[ObserverSample],
    spec: &RegressorSpec,
    holdout: f64,
    seed: u64,
) -> Result<(TrainedObserver, f64)> {
    let (train, held) = split_holdout(samples, holdout, seed);
    let model = train_regressor(spec, &train)?;
    let r = if held.is_empty() { f64::NAN } else { model.rmse_on(&held) };
    Ok((model, r))
}

pub fn build_table(plant: &Plant, model: &TrainedObserver, counts: [usize; 5], budget: usize, dt: f64) -> Result<ExplicitTable> {
    let provenance = TableProvenance {
        regressor: model.spec.label().to_string(),
        spec: Some(model.spec.clone()),
        data_digest: model.data_digest.clone(),
        dt,
    };
    build_explicit_table(model, &GridSpec::with_counts(plant, counts), provenance, budget)
}

pub fn train_velocity(plant: &Plant, cfg: &PipelineConfig) -> Result<DeepForestPredictor> {
    let series: Vec<Vec<f64>> = cfg
        .velocity_cycles
        .iter()
        .map(|c| c.generate(&plant.vehicle).map(|c| c.speeds_1s()))
        .collect::<Result<_>>()?;
    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
    train_velocity_model(&refs, &cfg.velocity, cfg.seed)
}

/// Runs T-MPC and LRMPC at every horizon. Optimality is computed within
/// each horizon.
pub fn run_sweep(
    plant: &Plant,
    cfg: &PipelineConfig,
    cycle: &DrivingCycle,
    table: Arc<ExplicitTable>,
    predictor: &dyn SpeedPredictor,
    strategies: &[&str],
) -> Result<(Vec<StrategySummary>, Vec<(String, usize, SimOutcome)>)> {
    let predictor = MemoPredictor::new(predictor);
    let mut summaries = Vec::new();
    let mut outcomes = Vec::new();
    for &h in &cfg.horizons {
        let mpc = MpcConfig {
            horizon: h,
            dt: cfg.sim.dt,
            ..cfg.mpc.clone()
        };
        let sim = SimConfig {
            horizon: h,
            ..cfg.sim.clone()
        };
        for &name in strategies {
            let mut ctl = make_controller(name, &mpc, Some(&table))?;
            let out = run_simulation(cycle, &sim, plant, ctl.as_mut(), &predictor)?;
            summaries.push(StrategySummary::from_outcome(&out, Some(h)));
            outcomes.push((name.to_string(), h, out));
        }
    }
    assign_optimality(&mut summaries);
    Ok((summaries, outcomes))
}

/// Controller by strategy name. Only `lrmpc` needs a table.
pub fn make_controller(name: &str, mpc: &MpcConfig, table: Option<&Arc<ExplicitTable>>) -> Result<Box<dyn EnergyController>> {
    Ok(match name {
        "tmpc" => Box::new(TmpcController::new(mpc.clone())),
        "lrmpc" => {
            let table = table.ok_or_else(|| Error::Param("lrmpc needs an explicit table".into()))?;
            Box::new(LrmpcController::new(mpc.clone(), table.clone())?)
        }
        "rule_cs" => Box::new(RuleBasedController::new(RuleConfig::default())),
        "rule_max_fc" => Box::new(RuleBasedController::new(RuleConfig {
            policy: crate::mpc::RulePolicy::MaxFuelCell,
            ..Default::default()
        })),
        other => return Err(Error::Param(format!("unknown strategy {other:?}"))),
    })
}

/// Paths written by [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineArtifacts {
    pub observer: PathBuf,
    pub table: PathBuf,
    pub velocity: PathBuf,
    pub sweep_csv: PathBuf,
    pub report: PathBuf,
    pub step_logs: Vec<PathBuf>,
    pub observer_holdout_rmse: f64,
    pub summaries: Vec<StrategySummary>,
    /// (strategy, horizon, outcome) for every sweep run.
    pub outcomes: Vec<(String, usize, SimOutcome)>,
}

/// Train observer → build table → train velocity model → sweep, writing
/// every artifact under `out`. Timing columns are masked in the files when
/// `mask_timing` is set.
pub fn run_pipeline(plant: &Plant, cfg: &PipelineConfig, out: &Path, mask_timing: bool) -> Result<PipelineArtifacts> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let samples = collect_observer_samples(plant, &cfg.sim, &cfg.logging, cfg.seed)?;
    let (observer, holdout_rmse) = train_observer(&samples, &cfg.seeded_regressor(), cfg.logging.holdout, cfg.seed)?;
    let observer_path = out.join("observer.bin");
    observer.save(&observer_path)?;

    let table = build_table(plant, &observer, cfg.grid, cfg.point_budget, cfg.sim.dt)?;
    let table_path = out.join("table.bin");
    table.save(&table_path)?;

    let velocity = train_velocity(plant, cfg)?;
    let velocity_path = out.join("velocity.bin");
    velocity.model.save(&velocity_path)?;

    let cycle = cfg.cycle.generate(&plant.vehicle)?;
    let (summaries, outcomes) = run_sweep(plant, cfg, &cycle, Arc::new(table), &velocity, &["tmpc", "lrmpc"])?;
    let sweep_csv = out.join("sweep.csv");
    write_sweep_csv(&sweep_csv, &summaries, mask_timing)?;
    let report = ComparisonReport {
        version: REPORT_VERSION,
        cycle: cycle.name.clone(),
        seed: cfg.seed,
        strategies: if mask_timing {
            summaries.iter().cloned().map(mask_summary).collect()
        } else {
            summaries.clone()
        },
    };
    let report_path = out.join("report.json");
    write_report_json(&report_path, &report)?;
    let mut step_logs = Vec::new();
    for (name, h, o) in &outcomes {
        let p = out.join(format!("steps_{name}_{h}.csv"));
        write_step_log_file(&p, &o.records, mask_timing)?;
        step_logs.push(p);
    }
    Ok(PipelineArtifacts {
        observer: observer_path,
        table: table_path,
        velocity: velocity_path,
        sweep_csv,
        report: report_path,
        step_logs,
        observer_holdout_rmse: holdout_rmse,
        summaries,
        outcomes,
    })
}

fn mask_summary(mut s: StrategySummary) -> StrategySummary {
    s.total_sim_time = 0.0;
    s.mean_solve_time = 0.0;
    s.max_solve_time = 0.0;
    s
}
