use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

/// Short cycles and small learners so every command finishes quickly.
fn small_config() -> Value {
    let cycle = |kind: &str, seed: u64, duration: f64| json!({ "kind": kind, "seed": seed, "duration": duration });
    json!({
        "cycle": cycle("urban", 7, 120.0),
        "logging": { "cycles": [cycle("urban", 11, 150.0)], "subsample": 1, "holdout": 0.2 },
        "regressor": { "kind": "random_forest", "n_trees": 5, "min_samples_leaf": 2, "seed": 0 },
        "grid": [3, 3, 2, 2, 2],
        "velocity": {
            "mgsp": { "feature_dim": 4, "window": 2, "output_dim": 1, "trees_per_forest": 3, "min_samples_leaf": 5 },
            "max_layers": 2,
            "trees_per_forest": 4,
            "min_samples_leaf": 5,
            "cv_folds": 2,
            "epsilon": 0.01
        },
        "velocity_cycles": [cycle("urban", 21, 200.0)],
        "horizons": [5]
    })
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new(config: &Value) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("config.json"), config.to_string()).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_fcev"))
            .current_dir(self.dir.path())
            .args(["--config", "config.json", "--out", out, "--mask-timing"])
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, out: &str, args: &[&str]) -> String {
        let o = self.run(out, args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    /// Writes a dithered rule-controller step log to `<out>/steps_rule_logging.csv`.
    fn logging_run(&self, out: &str) -> String {
        self.ok(out, &["simulate", "--strategy", "rule_logging", "--seed", "3"]);
        format!("{out}/steps_rule_logging.csv")
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_log_is_a_usage_error() {
    let w = Work::new(&small_config());
    let o = w.run("out", &["train-observer", "--logs", "nope.csv", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
}

#[test]
fn bad_arguments_are_usage_errors() {
    let w = Work::new(&small_config());
    assert_eq!(w.run("out", &["simulate", "--strategy", "bogus"]).status.code(), Some(2));
    assert_eq!(w.run("out", &["simulate", "--strategy", "lrmpc"]).status.code(), Some(2));
    assert_eq!(w.run("out", &["predict-velocity", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(w.run("out", &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn observer_training_is_reproducible() {
    let w = Work::new(&small_config());
    let log = w.logging_run("logs");
    let a = w.ok("a", &["train-observer", "--logs", &log, "--seed", "5"]);
    w.ok("b", &["train-observer", "--logs", &log, "--seed", "5"]);
    assert!(a.contains("held-out rmse"));
    let (x, y) = (
        std::fs::read(w.path("a/observer.bin")).unwrap(),
        std::fs::read(w.path("b/observer.bin")).unwrap(),
    );
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn boosted_regressor_config_is_accepted() {
    let mut cfg = small_config();
    cfg["regressor"] = json!({ "kind": "gradient_boosted_trees", "rounds": 10, "learning_rate": 0.1, "max_depth": 3, "seed": 0 });
    let w = Work::new(&cfg);
    let log = w.logging_run("logs");
    let out = w.ok("out", &["train-observer", "--logs", &log, "--seed", "2"]);
    assert!(w.path("out/observer.bin").is_file(), "{out}");
}

#[test]
fn unknown_config_fields_are_rejected() {
    let mut cfg = small_config();
    cfg["regressor"]["colour"] = json!("red");
    let w = Work::new(&cfg);
    let o = w.run("out", &["simulate"]);
    assert!(!o.status.success());
}

#[test]
fn table_csv_round_trip() {
    let w = Work::new(&small_config());
    let log = w.logging_run("logs");
    w.ok("obs", &["train-observer", "--logs", &log, "--seed", "1"]);
    let out = w.ok("tab", &["build-table", "--observer", "obs/observer.bin", "--csv"]);
    assert!(out.contains("table: 72 points"), "{out}");
    assert!(w.path("tab/table.bin").is_file());
    let rows = std::fs::read_to_string(w.path("tab/table.csv")).unwrap().lines().count();
    assert_eq!(rows, 73);
}

#[test]
fn single_strategy_sweep_is_its_own_reference() {
    let w = Work::new(&small_config());
    w.ok("out", &["sweep", "--strategy", "tmpc", "--horizon", "5"]);
    let csv = std::fs::read_to_string(w.path("out/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("strategy"), "tmpc");
    assert_eq!(col("horizon"), "5");
    assert_eq!(col("optimality_pct").parse::<f64>().unwrap(), 0.0);
    let report = read_json(&w.path("out/report.json"));
    assert_eq!(report["strategies"].as_array().unwrap().len(), 1);
    assert!(w.path("out/steps_tmpc_5.csv").is_file());
}

#[test]
fn standstill_cycle_burns_no_hydrogen() {
    let w = Work::new(&small_config());
    let mut csv = String::from("t_s,v_mps\n");
    for t in 0..=60 {
        csv.push_str(&format!("{t},0\n"));
    }
    std::fs::write(w.path("zero.csv"), csv).unwrap();
    w.ok("out", &["simulate", "--strategy", "tmpc", "--horizon", "5", "--cycle", "zero.csv"]);
    let report = read_json(&w.path("out/report.json"));
    let s = &report["strategies"][0];
    assert_eq!(s["h2_fc"].as_f64().unwrap(), 0.0);
    assert_eq!(s["h2_equiv"].as_f64().unwrap(), 0.0);
}

#[test]
fn simulation_output_is_deterministic() {
    let w = Work::new(&small_config());
    w.ok("a", &["simulate", "--strategy", "rule_cs"]);
    w.ok("b", &["simulate", "--strategy", "rule_cs"]);
    for f in ["report.json", "steps_rule_cs.csv"] {
        assert_eq!(
            std::fs::read(w.path(&format!("a/{f}"))).unwrap(),
            std::fs::read(w.path(&format!("b/{f}"))).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn velocity_training_and_prediction() {
    let w = Work::new(&small_config());
    let out = w.ok("vel", &["train-velocity", "--seed", "4"]);
    assert!(out.contains("cascade depth"));
    let pred = w.ok(
        "pred",
        &["predict-velocity", "--steps", "3", "--at", "30", "--velocity", "vel/velocity.bin"],
    );
    let values: Vec<f64> = pred
        .lines()
        .filter(|l| !l.starts_with("wrote"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(values.iter().all(|v| *v >= 0.0 && v.is_finite()));
    let csv = std::fs::read_to_string(w.path("pred/prediction.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t_s,v_mps");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("31,"));
}

#[test]
fn persistence_prediction_repeats_current_speed() {
    let w = Work::new(&small_config());
    std::fs::write(w.path("c.csv"), "t_s,v_mps\n0,0\n1,2\n2,4\n3,5\n").unwrap();
    let out = w.ok("p", &["predict-velocity", "--steps", "2", "--at", "2", "--cycle", "c.csv"]);
    assert!(out.starts_with("3 4.000000\n4 4.000000\n"), "{out}");
    let o = w.run("p", &["predict-velocity", "--at", "10", "--cycle", "c.csv"]);
    assert_eq!(o.status.code(), Some(2));
}
