use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fcev_ems::harness::{
    assign_optimality, build_table, load_cycle, make_controller, read_step_log, run_simulation, train_observer,
    train_velocity, write_report_json, write_step_log_file, write_sweep_csv, ComparisonReport, DrivingCycle,
    PipelineConfig, SimConfig, StrategySummary, REPORT_VERSION,
};
use fcev_ems::mpc::{EnergyController, MpcConfig, RuleBasedController};
use fcev_ems::observer::{generate_training_set, ExplicitTable, TrainedObserver};
use fcev_ems::powertrain::{Plant, PlantConfig};
use fcev_ems::velocity::{
    evaluate_horizon, predict_horizon, CascadeForestModel, DeepForestPredictor, LagWindow, MemoPredictor, PersistencePredictor,
    SpeedPredictor,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Fuel-cell/battery vehicle energy management: observer training, explicit
/// tables, velocity prediction and closed-loop horizon sweeps.
#[derive(Parser, Debug)]
#[command(name = "fcev", version, after_help = EXIT_HELP)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

const EXIT_HELP: &str = "Exit codes: 0 success, 1 runtime error, 2 usage error, 3 infeasible problem.";

#[derive(Args, Debug)]
struct Common {
    /// Pipeline configuration (JSON). Defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Plant configuration (JSON). The default plant is used otherwise.
    #[arg(long, global = true)]
    plant: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Zero the timing columns of written files.
    #[arg(long, global = true)]
    mask_timing: bool,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a ΔSOC regressor on step logs.
    TrainObserver {
        /// Step-log CSV files.
        #[arg(long, required = true, num_args = 1..)]
        logs: Vec<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
    /// Evaluate a trained observer on the configured grid.
    BuildTable {
        #[arg(long)]
        observer: PathBuf,
        /// Also export the table as CSV and check it reads back identically.
        #[arg(long)]
        csv: bool,
    },
    /// Train the deep-forest velocity model.
    TrainVelocity {
        #[arg(long)]
        seed: u64,
    },
    /// Run one strategy over a cycle.
    Simulate {
        #[arg(long, default_value = "tmpc")]
        strategy: String,
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        inputs: Inputs,
        /// Seed of the rule controller's dither.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run strategies at several horizons and write the comparison.
    Sweep {
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', default_value = "tmpc,lrmpc")]
        strategy: Vec<String>,
        /// Comma-separated horizons; the configured list otherwise.
        #[arg(long, value_delimiter = ',')]
        horizon: Vec<usize>,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Predict future speeds from a point of a cycle.
    PredictVelocity {
        /// Number of 1 s predictions.
        #[arg(long, default_value_t = 3)]
        steps: usize,
        /// Time on the cycle the prediction starts from, s.
        #[arg(long, default_value_t = 60.0)]
        at: f64,
        #[command(flatten)]
        inputs: Inputs,
    },
}

#[derive(Args, Debug)]
struct Inputs {
    /// Cycle CSV (t_s,v_mps). The configured synthetic cycle otherwise.
    #[arg(long)]
    cycle: Option<PathBuf>,
    /// Explicit table, needed by lrmpc.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Velocity model; persistence is used without one.
    #[arg(long)]
    velocity: Option<PathBuf>,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

struct Env {
    cfg: PipelineConfig,
    plant: Plant,
    out: PathBuf,
    mask_timing: bool,
    verbose: u8,
}

impl Env {
    fn new(common: &Common) -> anyhow::Result<Self> {
        let cfg = match &common.config {
            Some(p) => {
                require_file(p, "config")?;
                PipelineConfig::from_json_file(p)?
            }
            None => PipelineConfig::default(),
        };
        let plant = match &common.plant {
            Some(p) => {
                require_file(p, "plant config")?;
                let base = p.parent().unwrap_or(Path::new("."));
                PlantConfig::from_json_file(p)?.build(base)?
            }
            None => Plant::default(),
        };
        Ok(Self {
            cfg,
            plant,
            out: common.out.clone(),
            mask_timing: common.mask_timing,
            verbose: common.verbose,
        })
    }

    fn log(&self, level: u8, msg: impl AsRef<str>) {
        if self.verbose >= level {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn out_dir(&self) -> anyhow::Result<&Path> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn cycle(&self, path: &Option<PathBuf>) -> anyhow::Result<DrivingCycle> {
        Ok(match path {
            Some(p) => load_cycle(p, 1.0)?,
            None => self.cfg.cycle.generate(&self.plant.vehicle)?,
        })
    }

    fn predictor(&self, path: &Option<PathBuf>) -> anyhow::Result<Box<dyn SpeedPredictor>> {
        Ok(match path {
            Some(p) => Box::new(DeepForestPredictor::new(CascadeForestModel::load(p)?)?),
            None => Box::new(PersistencePredictor),
        })
    }

    fn controller(&self, name: &str, mpc: &MpcConfig, table: &Option<Arc<ExplicitTable>>, seed: u64) -> anyhow::Result<Box<dyn EnergyController>> {
        match (name, table) {
            ("rule_logging", _) => {
                let mut rule = self.cfg.logging.rule.clone();
                rule.seed = seed;
                Ok(Box::new(RuleBasedController::new(rule)))
            }
            ("lrmpc", None) => Err(usage("lrmpc needs --table")),
            ("tmpc" | "lrmpc" | "rule_cs" | "rule_max_fc", _) => Ok(make_controller(name, mpc, table.as_ref())?),
            _ => Err(usage(format!(
                "unknown strategy {name:?} (tmpc, lrmpc, rule_cs, rule_max_fc, rule_logging)"
            ))),
        }
    }
}

fn load_table(path: &Option<PathBuf>) -> anyhow::Result<Option<Arc<ExplicitTable>>> {
    path.as_ref()
        .map(|p| -> anyhow::Result<_> {
            require_file(p, "table")?;
            Ok(Arc::new(ExplicitTable::load(p)?))
        })
        .transpose()
}

fn check_inputs(inputs: &Inputs) -> anyhow::Result<()> {
    if let Some(p) = &inputs.cycle {
        require_file(p, "cycle")?;
    }
    if let Some(p) = &inputs.velocity {
        require_file(p, "velocity model")?;
    }
    if let Some(p) = &inputs.table {
        require_file(p, "table")?;
    }
    Ok(())
}

fn mask(mut s: StrategySummary, on: bool) -> StrategySummary {
    if on {
        s.total_sim_time = 0.0;
        s.mean_solve_time = 0.0;
        s.max_solve_time = 0.0;
    }
    s
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let env = Env::new(&cli.common)?;
    match cli.command {
        Command::TrainObserver { logs, seed } => {
            for p in &logs {
                require_file(p, "log")?;
            }
            let mut samples = Vec::new();
            for p in &logs {
                let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                let records = read_step_log(std::io::BufReader::new(f), &p.display().to_string())?;
                let s = generate_training_set(&records)?;
                samples.extend(s.into_iter().step_by(env.cfg.logging.subsample.max(1)));
            }
            env.log(1, format!("{} samples from {} logs", samples.len(), logs.len()));
            let mut cfg = env.cfg.clone();
            cfg.seed = seed;
            let (model, rmse) = train_observer(&samples, &cfg.seeded_regressor(), cfg.logging.holdout, seed)?;
            let path = env.out_dir()?.join("observer.bin");
            model.save(&path)?;
            println!("regressor: {}", model.spec.label());
            println!("held-out rmse: {rmse:.6e}");
            println!("wrote {}", path.display());
        }
        Command::BuildTable { observer, csv } => {
            require_file(&observer, "observer")?;
            let model = TrainedObserver::load(&observer)?;
            let table = build_table(&env.plant, &model, env.cfg.grid, env.cfg.point_budget, env.cfg.sim.dt)?;
            let dir = env.out_dir()?;
            let path = dir.join("table.bin");
            table.save(&path)?;
            println!("table: {} points", table.values.len());
            println!("wrote {}", path.display());
            if csv {
                let csv_path = dir.join("table.csv");
                table.write_csv(&csv_path)?;
                let back = table.read_csv_values(&csv_path)?;
                if back != table.values {
                    return Err(anyhow!("CSV export of the table does not read back identically"));
                }
                println!("wrote {}", csv_path.display());
            }
        }
        Command::TrainVelocity { seed } => {
            let mut cfg = env.cfg.clone();
            cfg.seed = seed;
            let model = train_velocity(&env.plant, &cfg)?;
            let path = env.out_dir()?.join("velocity.bin");
            model.model.save(&path)?;
            println!("cascade depth: {}", model.model.final_depth());
            let eval = env.cycle(&None)?.speeds_1s();
            for s in 1..=3 {
                let m = evaluate_horizon(&model, &eval, s)?;
                let base = evaluate_horizon(&PersistencePredictor, &eval, s)?;
                println!("{s} s: mae {:.4} rmse {:.4} (persistence rmse {:.4})", m.mae, m.rmse, base.rmse);
            }
            println!("wrote {}", path.display());
        }
        Command::Simulate {
            strategy,
            horizon,
            inputs,
            seed,
        } => {
            check_inputs(&inputs)?;
            let table = load_table(&inputs.table)?;
            let cycle = env.cycle(&inputs.cycle)?;
            let predictor = env.predictor(&inputs.velocity)?;
            let h = horizon.unwrap_or(env.cfg.mpc.horizon);
            let mpc = MpcConfig {
                horizon: h,
                dt: env.cfg.sim.dt,
                ..env.cfg.mpc.clone()
            };
            let sim = SimConfig {
                horizon: h,
                ..env.cfg.sim.clone()
            };
            let seed = seed.unwrap_or(env.cfg.seed);
            let mut ctl = env.controller(&strategy, &mpc, &table, seed)?;
            env.log(1, format!("simulating {strategy} at horizon {h} on {}", cycle.name));
            let outcome = run_simulation(&cycle, &sim, &env.plant, ctl.as_mut(), predictor.as_ref())?;
            let dir = env.out_dir()?;
            let log = dir.join(format!("steps_{strategy}.csv"));
            write_step_log_file(&log, &outcome.records, env.mask_timing)?;
            let mut summary = vec![StrategySummary::from_outcome(&outcome, Some(h))];
            assign_optimality(&mut summary);
            let report = ComparisonReport {
                version: REPORT_VERSION,
                cycle: cycle.name.clone(),
                seed,
                strategies: summary.into_iter().map(|s| mask(s, env.mask_timing)).collect(),
            };
            let rp = dir.join("report.json");
            write_report_json(&rp, &report)?;
            println!(
                "{strategy}: h2_equiv {:.4} g, h2_fc {:.4} g, final soc {:.4}",
                outcome.h2_equiv, outcome.h2_fc, outcome.final_soc
            );
            println!("wrote {} and {}", log.display(), rp.display());
        }
        Command::Sweep {
            strategy,
            horizon,
            inputs,
        } => {
            check_inputs(&inputs)?;
            if strategy.is_empty() {
                return Err(usage("no strategies given"));
            }
            let horizons = if horizon.is_empty() { env.cfg.horizons.clone() } else { horizon };
            if horizons.iter().any(|&h| h == 0) {
                return Err(usage("horizons must be positive"));
            }
            let table = load_table(&inputs.table)?;
            let cycle = env.cycle(&inputs.cycle)?;
            let model = env.predictor(&inputs.velocity)?;
            let predictor = MemoPredictor::new(model.as_ref());
            let mut summaries = Vec::new();
            let mut logs = Vec::new();
            for &h in &horizons {
                let mpc = MpcConfig {
                    horizon: h,
                    dt: env.cfg.sim.dt,
                    ..env.cfg.mpc.clone()
                };
                let sim = SimConfig {
                    horizon: h,
                    ..env.cfg.sim.clone()
                };
                for name in &strategy {
                    let mut ctl = env.controller(name, &mpc, &table, env.cfg.seed)?;
                    env.log(1, format!("{name} at horizon {h}"));
                    let o = run_simulation(&cycle, &sim, &env.plant, ctl.as_mut(), &predictor)?;
                    env.log(
                        2,
                        format!("  h2_equiv {:.4} g, mean solve {:.3e} s", o.h2_equiv, o.mean_solve_time),
                    );
                    summaries.push(StrategySummary::from_outcome(&o, Some(h)));
                    logs.push((format!("steps_{name}_{h}.csv"), o.records));
                }
            }
            assign_optimality(&mut summaries);
            let dir = env.out_dir()?;
            let csv = dir.join("sweep.csv");
            write_sweep_csv(&csv, &summaries, env.mask_timing)?;
            for (file, records) in &logs {
                write_step_log_file(&dir.join(file), records, env.mask_timing)?;
            }
            let report = ComparisonReport {
                version: REPORT_VERSION,
                cycle: cycle.name.clone(),
                seed: env.cfg.seed,
                strategies: summaries.iter().cloned().map(|s| mask(s, env.mask_timing)).collect(),
            };
            let rp = dir.join("report.json");
            write_report_json(&rp, &report)?;
            for s in &summaries {
                println!(
                    "{:<12} h={:<3} h2_equiv {:>10.4} g  optimality {:>7.3} %  mean solve {:.3e} s",
                    s.name,
                    s.horizon.unwrap_or(0),
                    s.h2_equiv,
                    s.optimality_pct,
                    s.mean_solve_time
                );
            }
            println!("wrote {} and {}", csv.display(), rp.display());
        }
        Command::PredictVelocity { steps, at, inputs } => {
            check_inputs(&inputs)?;
            if steps == 0 {
                return Err(usage("--steps must be at least 1"));
            }
            let cycle = env.cycle(&inputs.cycle)?;
            let speeds = cycle.speeds_1s();
            let k = at.round().max(0.0) as usize;
            if k >= speeds.len() {
                return Err(usage(format!("--at {at} is past the end of the cycle ({} s)", cycle.duration())));
            }
            let predictor = env.predictor(&inputs.velocity)?;
            let window = LagWindow::from_history(&speeds[..=k], predictor.lags())?;
            let pred = predict_horizon(predictor.as_ref(), &window, steps, 1.0)?;
            let path = env.out_dir()?.join("prediction.csv");
            let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
            w.write_record(["t_s", "v_mps"])?;
            for (i, v) in pred.iter().enumerate() {
                let t = (k + i + 1) as f64;
                w.write_record([t.to_string(), format!("{v:.9}")])?;
                println!("{t} {v:.6}");
            }
            w.flush()?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {e}");
                eprintln!("Run `fcev --help` for usage.");
                return ExitCode::from(EXIT_USAGE);
            }
            eprintln!("error: {e:#}");
            let infeasible = e
                .chain()
                .any(|c| c.downcast_ref::<fcev_ems::Error>().is_some_and(|x| x.is_infeasible()));
            ExitCode::from(if infeasible { EXIT_INFEASIBLE } else { EXIT_RUNTIME })
        }
    }
}
