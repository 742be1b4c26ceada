use approx::assert_relative_eq;
use fcev_ems::harness::{Mode, StepRecord};
use fcev_ems::mpc::BatteryCoefficients;
use fcev_ems::observer::{
    build_explicit_table, fit_scaled, fit_soc_polynomial, generate_training_set, train_regressor, Axis,
    ExplicitTable, GridSpec, ObserverRegressor, ObserverSample, RegressorSpec, TableProvenance, TrainedObserver,
};
use fcev_ems::powertrain::{battery_current, soc_step, Plant};
use fcev_ems::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(t: f64, soc: f64, p_batt: f64) -> StepRecord {
    StepRecord {
        t,
        v: 5.0,
        p_load: 12_000.0,
        p_fc: 12_000.0 - p_batt,
        p_batt,
        soc,
        u_batt: 360.0,
        r_batt: 0.5,
        i_batt: 0.0,
        h2_fc_cum: 0.0,
        h2_equiv_cum: 0.0,
        mode: Mode::Hev,
        solve_time: 0.0,
        soc_clamped: false,
    }
}

fn provenance() -> TableProvenance {
    TableProvenance {
        regressor: "closure".into(),
        spec: None,
        data_digest: String::new(),
        dt: 0.05,
    }
}

fn random_samples(n: usize, seed: u64, target: impl Fn(&[f64; 5]) -> f64) -> Vec<ObserverSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let f = [
                rng.gen_range(-30_000.0..30_000.0),
                rng.gen_range(0.0..50_000.0),
                rng.gen_range(300.0..400.0),
                rng.gen_range(0.4..0.6),
                rng.gen_range(0.0..60_000.0),
            ];
            ObserverSample {
                p_batt: f[0],
                p_load: f[1],
                u_batt: f[2],
                r_batt: f[3],
                p_fc: f[4],
                delta_soc: target(&f),
            }
        })
        .collect()
}

#[test]
fn training_set_pairs_consecutive_steps() {
    let two = [record(0.0, 0.6, 1000.0), record(0.05, 0.59, 1000.0)];
    let s = generate_training_set(&two).unwrap();
    assert_eq!(s.len(), 1);
    assert_relative_eq!(s[0].delta_soc, -0.01, epsilon = 1e-15);
    assert_eq!(s[0].p_batt, 1000.0);

    let flat: Vec<_> = (0..10).map(|k| record(k as f64 * 0.05, 0.6, 0.0)).collect();
    assert!(generate_training_set(&flat).unwrap().iter().all(|s| s.delta_soc == 0.0));

    assert!(matches!(generate_training_set(&two[..1]), Err(Error::Empty(_))));
    assert!(matches!(generate_training_set(&[]), Err(Error::Empty(_))));
}

#[test]
fn training_set_matches_coulomb_counting() {
    let plant = Plant::default();
    let mut b = plant.battery.clone();
    b.soc_floor = 0.0;
    let next = soc_step(&b, 0.6, 40.0, 0.05).soc;
    let s = generate_training_set(&[record(0.0, 0.6, 0.0), record(0.05, next, 0.0)]).unwrap();
    assert_relative_eq!(s[0].delta_soc, -1.3889e-5, max_relative = 1e-4);
}

#[test]
fn constant_target_gives_constant_model() {
    let samples = random_samples(200, 1, |_| 2.5e-5);
    let spec = RegressorSpec::RandomForest {
        n_trees: 10,
        max_depth: Some(1),
        min_samples_leaf: 1,
        seed: 3,
    };
    let m = train_regressor(&spec, &samples).unwrap();
    for s in random_samples(50, 9, |_| 0.0) {
        assert_relative_eq!(m.predict(&s.features()), 2.5e-5, max_relative = 1e-12);
    }
    assert!(m.train_rmse < 1e-16);
}

#[test]
fn boosting_fits_linear_target() {
    let samples = random_samples(1000, 2, |f| 1e-9 * f[0]);
    let mean = samples.iter().map(|s| s.delta_soc).sum::<f64>() / samples.len() as f64;
    let std = (samples.iter().map(|s| (s.delta_soc - mean).powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    let spec = RegressorSpec::GradientBoostedTrees {
        rounds: 200,
        learning_rate: 0.1,
        max_depth: 4,
        min_samples_leaf: 1,
        seed: 4,
    };
    let m = train_regressor(&spec, &samples).unwrap();
    assert!(m.train_rmse < 0.05 * std, "rmse {} std {}", m.train_rmse, std);
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let samples = random_samples(300, 5, |f| 1e-9 * f[0] - 1e-10 * f[1]);
    let spec = RegressorSpec::random_forest(17);
    let a = train_regressor(&spec, &samples).unwrap();
    let b = train_regressor(&spec, &samples).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let back = TrainedObserver::from_bytes(&a.to_bytes().unwrap()).unwrap();
    assert_eq!(back, a);
    for s in &samples[..20] {
        assert_eq!(a.predict(&s.features()).to_bits(), back.predict(&s.features()).to_bits());
    }
}

#[test]
fn training_rejects_bad_input() {
    let spec = RegressorSpec::random_forest(0);
    assert!(train_regressor(&spec, &[]).is_err());
    let mut samples = random_samples(10, 6, |_| 0.0);
    samples[3].u_batt = f64::NAN;
    assert!(train_regressor(&spec, &samples).is_err());
}

#[test]
fn table_counts_and_node_identity() {
    let plant = Plant::default();
    let grid = GridSpec::with_counts(&plant, [2, 2, 2, 2, 2]);
    let f = |x: &[f64; 5]| 1e-9 * x[0] + 1e-12 * x[1] * x[4] - 1e-6 * x[2] * x[3];
    let t = build_explicit_table(&f, &grid, provenance(), 1000).unwrap();
    assert_eq!(t.values.len(), 32);
    for flat in 0..32 {
        let idx = t.unflatten(flat);
        assert_eq!(t.flat_index(idx), flat);
        assert_eq!(t.values[flat], f(&t.point(idx)));
    }
    match build_explicit_table(&f, &grid, provenance(), 31) {
        Err(Error::Budget { product, budget }) => assert_eq!((product, budget), (32, 31)),
        other => panic!("expected a budget error, got {other:?}"),
    }
}

#[test]
fn full_scale_grid_is_accepted() {
    let plant = Plant::default();
    let grid = GridSpec::full_scale(&plant);
    assert_eq!(grid.n_points(), 3_888_885);
    let t = build_explicit_table(&|x: &[f64; 5]| x[0], &grid, provenance(), 4_000_000).unwrap();
    assert_eq!(t.values.len(), 3_888_885);
    assert!(build_explicit_table(&|x: &[f64; 5]| x[0], &grid, provenance(), 3_888_884).is_err());
}

fn small_table() -> ExplicitTable {
    let plant = Plant::default();
    let grid = GridSpec::with_counts(&plant, [9, 7, 5, 4, 3]);
    let f = |x: &[f64; 5]| x[0] + 10.0 * x[1] + 100.0 * x[2] + 1000.0 * x[3] + x[4] * x[4];
    build_explicit_table(&f, &grid, provenance(), 10_000).unwrap()
}

#[test]
fn first_filter_slices_the_table() {
    let t = small_table();
    let idx = [2, 3, 1];
    let (u, r, p) = (t.axes[2].coord(idx[0]), t.axes[3].coord(idx[1]), t.axes[4].coord(idx[2]));
    let s = t.filter_stage1(u, r, p).unwrap();
    assert_eq!(s.snapped, idx);
    assert_eq!(s.values.len(), t.axes[0].points * t.axes[1].points);
    for il in 0..t.axes[1].points {
        for ib in 0..t.axes[0].points {
            assert_eq!(s.values[il * t.axes[0].points + ib], t.value_at([ib, il, idx[0], idx[1], idx[2]]));
        }
    }

    // Either side of the midpoint between two voltage nodes.
    let mid = 0.5 * (t.axes[2].coord(1) + t.axes[2].coord(2));
    let below = t.filter_stage1(mid - 1e-6, r, p).unwrap();
    let above = t.filter_stage1(mid + 1e-6, r, p).unwrap();
    assert_eq!((below.snapped[0], above.snapped[0]), (1, 2));
    assert_ne!(below.values, above.values);

    match t.filter_stage1(t.axes[2].max + 1.0, r, p) {
        Err(Error::Range { what, .. }) => assert_eq!(what, "u_batt"),
        other => panic!("expected a range error, got {other:?}"),
    }
}

#[test]
fn second_filter_returns_rows() {
    let t = small_table();
    let s = t.filter_stage1(t.axes[2].coord(0), t.axes[3].coord(0), t.axes[4].coord(0)).unwrap();
    let c = s.filter_stage2(t.axes[1].coord(4)).unwrap();
    assert_eq!(c.p_load_index, 4);
    assert_eq!(c.p_batt, t.axes[0].coords());
    assert_eq!(c.delta_soc, (0..9).map(|ib| t.value_at([ib, 4, 0, 0, 0])).collect::<Vec<_>>());
    assert!(s.filter_stage2(-1.0).is_err());
}

#[test]
fn table_file_and_csv_round_trip() {
    let t = small_table();
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("table.bin");
    t.save(&bin).unwrap();
    assert_eq!(ExplicitTable::load(&bin).unwrap(), t);
    let csv = dir.path().join("table.csv");
    t.write_csv(&csv).unwrap();
    assert_eq!(t.read_csv_values(&csv).unwrap(), t.values);
}

#[test]
fn exact_degree7_is_recovered() {
    let coef = [1e-3, -2e-8, 3e-13, 0.0, -1e-22, 2e-27, 0.0, 1e-36];
    let x: Vec<f64> = (0..41).map(|i| -30_000.0 + 1500.0 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&v| coef.iter().rev().fold(0.0, |acc, c| acc * v + c)).collect();
    let p = fit_soc_polynomial(&x, &y).unwrap();
    let range = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
    assert!(p.fit_rmse < 1e-12 * range);
    for (&xi, &yi) in x.iter().zip(&y) {
        assert_relative_eq!(p.eval(xi).unwrap(), yi, epsilon = 1e-12 * range);
        assert_relative_eq!(p.eval_original_units(xi), yi, epsilon = 1e-9 * range);
    }
    // Compare each term at the edge of the domain.
    for (j, (a, b)) in p.coefficients.iter().zip(coef).enumerate() {
        let scale = 30_000f64.powi(j as i32);
        assert!((a - b).abs() * scale < 1e-9 * range, "a_{j}: {a} vs {b}");
    }
}

#[test]
fn constant_curve_fit() {
    let x: Vec<f64> = (0..20).map(|i| i as f64 * 100.0).collect();
    let p = fit_soc_polynomial(&x, &vec![-4e-6; 20]).unwrap();
    assert_relative_eq!(p.coefficients[0], -4e-6, max_relative = 1e-9);
    assert!(p.coefficients[1..].iter().all(|c| c.abs() < 1e-18));
    assert!(p.eval(3000.0).is_none());
}

#[test]
fn soc_rate_curve_fits_within_one_percent() {
    let plant = Plant::default();
    let bat = BatteryCoefficients::at(&plant.battery, 0.6);
    let x: Vec<f64> = (0..76).map(|i| -35_000.0 + 1000.0 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&p| bat.soc_rate(p).unwrap()).collect();
    let p = fit_soc_polynomial(&x, &y).unwrap();
    let range = y[0] - y[y.len() - 1];
    assert!(p.fit_rmse < 0.01 * range, "rmse {} range {range}", p.fit_rmse);
    // Same curve through the plant's current and coulomb counting.
    let pb = 12_345.0;
    let i = battery_current(&plant.battery, 0.6, pb).unwrap();
    assert_relative_eq!(bat.soc_rate(pb).unwrap(), -i / plant.battery.capacity_coulombs(), max_relative = 1e-12);
}

#[test]
fn duplicate_abscissae_fail() {
    let x = vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0];
    let y = vec![0.0; 9];
    assert!(matches!(fit_soc_polynomial(&x, &y), Err(Error::Fit(_))));
}

#[test]
fn axis_snaps_to_nearest() {
    let a = Axis::linear("p", 0.0, 10.0, 11);
    assert_eq!(a.snap(4.49).unwrap(), 4);
    assert_eq!(a.snap(4.51).unwrap(), 5);
    assert_eq!(a.snap(10.0).unwrap(), 10);
    assert!(a.snap(10.01).is_err());
}

fn sse(x: &[f64], y: &[f64], degree: usize) -> f64 {
    let (c, center, hw) = fit_scaled(x, y, degree).unwrap();
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let t = (xi - center) / hw;
            let v = c.iter().rev().fold(0.0, |acc, a| acc * t + a);
            (v - yi).powi(2)
        })
        .sum()
}

proptest! {
    #[test]
    fn higher_degree_never_fits_worse(ys in prop::collection::vec(-1.0f64..1.0, 12..40)) {
        let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let (s1, s7) = (sse(&x, &ys, 1), sse(&x, &ys, 7));
        prop_assert!(s7 <= s1 * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn table_flat_index_round_trips(flat in 0usize..(9 * 7 * 5 * 4 * 3)) {
        let t = small_table();
        prop_assert_eq!(t.flat_index(t.unflatten(flat)), flat);
    }
}
