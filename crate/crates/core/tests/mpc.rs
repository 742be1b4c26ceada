use std::sync::Arc;

use approx::assert_relative_eq;
use fcev_ems::mpc::{
    build_problem, linearize, linearize_step, lrmpc_rollout, objective, solve, tmpc_rollout, tmpc_rollout_stacked,
    BatteryCoefficients, ControlContext, HorizonProblem, HydrogenCoefficients, LinearizedObserver, LrmpcController,
    MpcConfig, OperatingPoint, SocObserver, SolverSettings, StateCost, TmpcController,
};
use fcev_ems::observer::{build_explicit_table, fit_soc_polynomial, GridSpec, SocPolynomial, TableProvenance};
use fcev_ems::powertrain::{battery_current, soc_step, Plant};
use fcev_ems::{Error, Result};
use proptest::prelude::*;

fn h2(plant: &Plant) -> HydrogenCoefficients {
    HydrogenCoefficients {
        c_h2: plant.fuel_cell.c_h2,
        s: 2.0,
        lhv: plant.fuel_cell.lhv_h2,
    }
}

/// Horizon with wide bounds and no rate limit unless the caller narrows them.
fn problem(p_load: Vec<f64>, u_min: f64, u_max: f64) -> HorizonProblem {
    let plant = Plant::default();
    let n = p_load.len();
    HorizonProblem {
        soc0: 0.6,
        z: OperatingPoint {
            u_batt: 370.0,
            r_batt: 0.5,
            p_fc: 10_000.0,
        },
        dt: 0.05,
        k: vec![1.0; n],
        q1: 1.0,
        q2: 50.0,
        x_ref: 0.6,
        y_ref: 0.0,
        state_cost: StateCost::Linear,
        u_min: vec![u_min; n],
        u_max: vec![u_max; n],
        p_batt_min: -35_000.0,
        p_batt_max: 40_000.0,
        p_fc_min: 0.0,
        p_fc_max: 61_560.0,
        dp_fc_min: -1e9,
        dp_fc_max: 1e9,
        p_fc_prev: 10_000.0,
        m: p_load.clone(),
        n: p_load.iter().map(|p| 61_560.0 - p).collect(),
        hydrogen: h2(&plant),
        p_load,
    }
}

fn coefficients() -> BatteryCoefficients {
    BatteryCoefficients::at(&Plant::default().battery, 0.6)
}

#[test]
fn state_matrices_vanish() {
    let bat = coefficients();
    let hc = h2(&Plant::default());
    for &(pb, pl) in &[(5000.0, 20_000.0), (-8000.0, 3000.0), (0.0, 1000.0), (39_000.0, 40_000.0)] {
        let m = linearize_step(&bat, &hc, pb, pl).unwrap();
        assert_eq!((m.a, m.d), (0.0, 0.0));
    }
    let m = linearize_step(&bat, &hc, 0.0, 20_000.0).unwrap();
    assert_relative_eq!(m.b, -20_000.0 / (bat.capacity * bat.u_ocv), max_relative = 1e-12);
    assert_eq!(m.c, 0.0);
}

#[test]
fn linearization_fails_past_max_power() {
    let bat = coefficients();
    let p = bat.u_ocv * bat.u_ocv / (4.0 * bat.r_discharge) + 1.0;
    match linearize_step(&bat, &h2(&Plant::default()), p, p) {
        Err(e @ Error::Linearization { .. }) => assert!(e.is_infeasible()),
        other => panic!("expected a linearization error, got {other:?}"),
    }
}

#[test]
fn single_step_rollout() {
    let bat = coefficients();
    let pr = problem(vec![20_000.0], -1.0, 1.0);
    let u = [0.3];
    let model = linearize(&bat, &pr.hydrogen, &u, &pr.p_load, pr.dt).unwrap();
    let (soc, _) = tmpc_rollout(&model, &pr, &u);
    let m = model.steps[0];
    assert_relative_eq!(soc[0], 0.6 + (m.b * 0.3 + m.c * 20_000.0) * 0.05, max_relative = 1e-15);
    // B and C are the partial derivatives of the exact rate r(u·v).
    let r = |u: f64, v: f64| bat.soc_rate(u * v).unwrap();
    let h = 1e-6;
    assert_relative_eq!(m.b, (r(0.3 + h, 20_000.0) - r(0.3 - h, 20_000.0)) / (2.0 * h), max_relative = 1e-6);
    let hv = 20_000.0 * h;
    assert_relative_eq!(m.c, (r(0.3, 20_000.0 + hv) - r(0.3, 20_000.0 - hv)) / (2.0 * hv), max_relative = 1e-6);
}

#[test]
fn zero_split_keeps_soc() {
    let bat = coefficients();
    let pr = problem(vec![15_000.0; 6], -1.0, 1.0);
    let u = [0.0; 6];
    let model = linearize(&bat, &pr.hydrogen, &u, &pr.p_load, pr.dt).unwrap();
    let (soc, _) = tmpc_rollout(&model, &pr, &u);
    assert!(soc.iter().all(|&s| s == 0.6));
}

#[test]
fn zero_polynomials_keep_soc() {
    let pr = problem(vec![15_000.0; 4], -1.0, 1.0);
    let polys = vec![SocPolynomial::zero((-40_000.0, 40_000.0)); 4];
    assert_eq!(lrmpc_rollout(&polys, &pr, &[0.2, -0.1, 0.5, 0.0]).unwrap(), vec![0.6; 4]);
    match lrmpc_rollout(&polys, &pr, &[0.2, -0.1, 3.0, 0.0]) {
        Err(Error::Domain { step, .. }) => assert_eq!(step, 2),
        other => panic!("expected a domain error, got {other:?}"),
    }
}

#[test]
fn polynomial_rollout_matches_plant_step() {
    let plant = Plant::default();
    let bat = coefficients();
    let x: Vec<f64> = (0..76).map(|i| -35_000.0 + 1000.0 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&p| bat.soc_rate(p).unwrap()).collect();
    let poly = fit_soc_polynomial(&x, &y).unwrap();
    let pr = problem(vec![20_000.0], -1.0, 1.0);
    for u in [-0.8, -0.2, 0.0, 0.45, 0.9] {
        let soc = lrmpc_rollout(std::slice::from_ref(&poly), &pr, &[u]).unwrap();
        let i = battery_current(&plant.battery, 0.6, u * 20_000.0).unwrap();
        let direct = soc_step(&plant.battery, 0.6, i, pr.dt).soc;
        assert!((soc[0] - direct).abs() <= 3.0 * poly.fit_rmse * pr.dt + 1e-15, "u {u}");
    }
}

#[test]
fn objective_examples() {
    let mut pr = problem(vec![10_000.0; 5], -1.0, 1.0);
    pr.y_ref = 0.3;
    assert_eq!(objective(&pr, &[0.6; 5], &[0.3; 5]), 0.0);
    pr.q1 = 0.0;
    pr.q2 = 1.0;
    assert_relative_eq!(objective(&pr, &[0.62; 5], &[9.0; 5]), 5.0 * 0.02, max_relative = 1e-12);
    pr.state_cost = StateCost::Squared;
    assert_relative_eq!(objective(&pr, &[0.62; 5], &[9.0; 5]), 5.0 * 0.02 * 0.02, max_relative = 1e-12);
}

/// y = u with the SOC held, so the cost is Σ q1·(u − y_ref)².
struct Quadratic;

impl SocObserver for Quadratic {
    fn rollout(&self, problem: &HorizonProblem, u: &[f64], soc: &mut [f64], y: &mut [f64]) -> Result<()> {
        soc.fill(problem.soc0);
        y.copy_from_slice(u);
        Ok(())
    }
}

#[test]
fn solver_finds_quadratic_minimizer() {
    let mut pr = problem(vec![20_000.0], -0.5, 0.5);
    pr.y_ref = 0.123;
    let sol = solve(&pr, &Quadratic, None, &SolverSettings::default()).unwrap();
    assert!((sol.u[0] - 0.123).abs() < 1e-6);
    assert!(sol.stats.converged);
    // Minimizer outside the box lands on the nearest edge.
    pr.y_ref = 0.9;
    let sol = solve(&pr, &Quadratic, None, &SolverSettings::default()).unwrap();
    assert!((sol.u[0] - 0.5).abs() < 1e-9);
}

#[test]
fn degenerate_box_returns_the_point() {
    let pr = problem(vec![20_000.0, 22_000.0, 18_000.0], 0.25, 0.25);
    let sol = solve(&pr, &LinearizedObserver { battery: coefficients() }, None, &SolverSettings::default()).unwrap();
    assert_eq!(sol.u, vec![0.25; 3]);
}

#[test]
fn empty_box_is_infeasible() {
    let mut pr = problem(vec![20_000.0], 0.2, 0.3);
    pr.p_batt_max = 1000.0;
    let err = solve(&pr, &Quadratic, None, &SolverSettings::default()).unwrap_err();
    assert!(err.is_infeasible());
}

#[test]
fn warm_start_anchor() {
    let cfg = MpcConfig::default();
    assert_eq!(cfg.anchor_split(25_000.0), 0.0);
    assert_relative_eq!(cfg.anchor_split(50_000.0), 0.5);
}

fn context<'a>(plant: &'a Plant, seq: &'a [f64], soc: f64, p_fc_prev: f64) -> ControlContext<'a> {
    let b = &plant.battery;
    ControlContext {
        soc,
        z: OperatingPoint {
            u_batt: b.ocv(soc),
            r_batt: b.resistance(soc, 1.0),
            p_fc: p_fc_prev,
        },
        p_fc_prev,
        p_load_seq: seq,
        plant,
    }
}

#[test]
fn built_problems_are_feasible() {
    let plant = Plant::default();
    let cfg = MpcConfig::default();
    for (seq, prev) in [
        (vec![30_000.0; 20], 25_000.0),
        (vec![5_000.0; 20], 25_000.0),
        ((0..20).map(|i| 2000.0 * i as f64 + 1000.0).collect(), 0.0),
    ] {
        let pr = build_problem(&cfg, &context(&plant, &seq, 0.55, prev)).unwrap();
        pr.check_feasible().unwrap();
        let sol = solve(&pr, &LinearizedObserver { battery: coefficients() }, None, &cfg.solver).unwrap();
        assert!(pr.max_violation(&sol.u) < 1e-9);
    }
    assert!(build_problem(&cfg, &context(&plant, &[0.0; 20], 0.55, 0.0)).is_err());
}

#[test]
fn lrmpc_with_exact_table_tracks_tmpc() {
    let plant = Plant::default();
    let soc = 0.58;
    let bat = BatteryCoefficients::at(&plant.battery, soc);
    let dt = 0.05;
    let exact = move |f: &[f64; 5]| bat.soc_rate(f[0]).unwrap() * dt;
    let grid = GridSpec::with_counts(&plant, [76, 13, 2, 2, 2]);
    let prov = TableProvenance {
        regressor: "exact".into(),
        spec: None,
        data_digest: String::new(),
        dt,
    };
    let table = Arc::new(build_explicit_table(&exact, &grid, prov, 1_000_000).unwrap());
    let cfg = MpcConfig {
        horizon: 5,
        ..MpcConfig::default()
    };
    for (load, prev) in [(20_000.0, 20_000.0), (30_000.0, 24_000.0), (40_000.0, 30_000.0), (15_000.0, 16_000.0)] {
        let seq = [load; 5];
        let ctx = context(&plant, &seq, soc, prev);
        let (_, t) = TmpcController::new(cfg.clone()).solve_step(&ctx).unwrap();
        let (_, l) = LrmpcController::new(cfg.clone(), table.clone()).unwrap().alg1_step(&ctx).unwrap();
        assert!((t.u[0] - l.u[0]).abs() <= 0.02, "load {load}: {} vs {}", t.u[0], l.u[0]);
    }
}

fn load_seq(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(2000.0f64..50_000.0, n)
}

proptest! {
    #[test]
    fn stacked_rollout_matches_recursion(loads in load_seq(8), u in prop::collection::vec(-0.8f64..0.8, 8)) {
        let pr = problem(loads, -1.0, 1.0);
        let model = linearize(&coefficients(), &pr.hydrogen, &u, &pr.p_load, pr.dt).unwrap();
        let (s1, y1) = tmpc_rollout(&model, &pr, &u);
        let (s2, y2) = tmpc_rollout_stacked(&model, &pr, &u);
        for i in 0..8 {
            prop_assert!((s1[i] - s2[i]).abs() < 1e-12);
            prop_assert!((y1[i] - y2[i]).abs() <= 1e-12 * y1[i].abs().max(1.0));
        }
    }

    #[test]
    fn solutions_respect_every_constraint(
        loads in load_seq(6),
        prev in 0.0f64..40_000.0,
        soc in 0.2f64..0.8,
        q2 in 0.0f64..6000.0,
    ) {
        let plant = Plant::default();
        let cfg = MpcConfig { horizon: 6, q2, ..MpcConfig::default() };
        let ctx = context(&plant, &loads, soc, prev);
        let pr = match build_problem(&cfg, &ctx) {
            Ok(p) => p,
            Err(e) => { prop_assert!(e.is_infeasible()); return Ok(()); }
        };
        let obs = LinearizedObserver { battery: BatteryCoefficients::at(&plant.battery, soc) };
        let sol = solve(&pr, &obs, None, &cfg.solver).unwrap();
        prop_assert!(pr.max_violation(&sol.u) <= 1e-9, "violation {}", pr.max_violation(&sol.u));
        // Restarting from the answer cannot make it worse.
        let again = solve(&pr, &obs, Some(&sol.u), &cfg.solver).unwrap();
        prop_assert!(again.objective <= sol.objective + 1e-9 * sol.objective.abs().max(1.0));
        prop_assert!(pr.max_violation(&again.u) <= 1e-9);
    }
}
