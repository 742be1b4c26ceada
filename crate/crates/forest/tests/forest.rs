use fcev_forest::{
    derive_seed, BoostingParams, DataView, Forest, ForestError, ForestParams, GradientBoosting, MaxFeatures,
    RegressionTree, Regressor, Splitter, TreeParams,
};
use proptest::prelude::*;

/// Two features on a scrambled grid, target `x0 - 2 x1`.
fn linear_set(n: usize) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n)
        .flat_map(|i| [((i * 37) % 101) as f64 / 10.0, ((i * 53) % 89) as f64 / 10.0])
        .collect();
    let y = x.chunks(2).map(|r| r[0] - 2.0 * r[1]).collect();
    (x, y)
}

fn leaf_of(tree: &RegressionTree, row: &[f64]) -> usize {
    let nodes = tree.nodes();
    let mut i = 0;
    while !nodes[i].is_leaf() {
        let n = &nodes[i];
        i = if row[n.feature as usize] <= n.threshold { n.left } else { n.right } as usize;
    }
    i
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    (pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

#[test]
fn data_view_rejects_bad_input() {
    let x = [1.0, 2.0, 3.0, 4.0];
    assert!(DataView::new(&x, 2, &[0.0, 1.0]).is_ok());
    assert!(matches!(DataView::new(&x, 3, &[0.0]), Err(ForestError::Shape { len: 4, n_features: 3 })));
    assert!(matches!(
        DataView::new(&x, 2, &[0.0]),
        Err(ForestError::TargetCount { rows: 2, targets: 1 })
    ));
    assert!(matches!(DataView::new(&[], 2, &[]), Err(ForestError::EmptyDataset)));
    assert!(matches!(
        DataView::new(&[1.0, f64::NAN, 3.0, 4.0], 2, &[0.0, 1.0]),
        Err(ForestError::NonFinite { row: 0, column: 1 })
    ));
    assert!(DataView::new(&x, 2, &[0.0, f64::INFINITY]).is_err());
    assert!(DataView::new(&x, 0, &[0.0, 1.0]).is_err());
}

#[test]
fn invalid_params_are_rejected() {
    let (x, y) = linear_set(20);
    let data = DataView::new(&x, 2, &y).unwrap();
    let bad_leaf = TreeParams {
        min_samples_leaf: 0,
        ..TreeParams::default()
    };
    assert!(matches!(RegressionTree::fit(&data, &bad_leaf, 0), Err(ForestError::Param(_))));
    let bad_depth = TreeParams {
        max_depth: Some(0),
        ..TreeParams::default()
    };
    assert!(RegressionTree::fit(&data, &bad_depth, 0).is_err());
    let bad_frac = TreeParams {
        max_features: MaxFeatures::Fraction(1.5),
        ..TreeParams::default()
    };
    assert!(RegressionTree::fit(&data, &bad_frac, 0).is_err());
    let no_trees = ForestParams {
        n_trees: 0,
        ..ForestParams::random_forest(10, 1)
    };
    assert!(Forest::fit(&data, &no_trees, 0).is_err());
}

#[test]
fn full_tree_interpolates_distinct_rows() {
    let (x, y) = linear_set(80);
    let data = DataView::new(&x, 2, &y).unwrap();
    let tree = RegressionTree::fit(&data, &TreeParams::default(), 0).unwrap();
    for (row, t) in x.chunks(2).zip(&y) {
        assert_eq!(tree.predict_row(row), *t);
    }
}

#[test]
fn step_function_needs_one_split() {
    let x: Vec<f64> = (0..50).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&v| if v < 20.0 { -1.0 } else { 3.0 }).collect();
    let data = DataView::new(&x, 1, &y).unwrap();
    let tree = RegressionTree::fit(&data, &TreeParams::default(), 0).unwrap();
    assert_eq!(tree.n_leaves(), 2);
    assert_eq!(tree.depth(), 1);
    assert_eq!(tree.predict_row(&[5.0]), -1.0);
    assert_eq!(tree.predict_row(&[45.0]), 3.0);
}

#[test]
fn constant_target_is_a_single_leaf() {
    let (x, _) = linear_set(40);
    let y = vec![4.25; 40];
    let data = DataView::new(&x, 2, &y).unwrap();
    let tree = RegressionTree::fit(&data, &TreeParams::default(), 3).unwrap();
    assert_eq!(tree.n_leaves(), 1);
    let forest = Forest::fit(&data, &ForestParams::random_forest(7, 2), 3).unwrap();
    assert_eq!(forest.trees().len(), 7);
    assert!(forest.predict(&x).iter().all(|&p| (p - 4.25).abs() < 1e-12));
}

#[test]
fn depth_and_leaf_limits_hold() {
    let (x, y) = linear_set(300);
    let data = DataView::new(&x, 2, &y).unwrap();
    for depth in 1..6 {
        let p = TreeParams {
            max_depth: Some(depth),
            ..TreeParams::default()
        };
        let tree = RegressionTree::fit(&data, &p, 1).unwrap();
        assert!(tree.depth() <= depth);
        assert!(tree.n_leaves() <= 1 << depth);
    }
    for min_leaf in [1, 5, 17] {
        let p = TreeParams {
            min_samples_leaf: min_leaf,
            ..TreeParams::default()
        };
        let tree = RegressionTree::fit(&data, &p, 1).unwrap();
        let mut counts = vec![0usize; tree.nodes().len()];
        for row in x.chunks(2) {
            counts[leaf_of(&tree, row)] += 1;
        }
        for (i, n) in tree.nodes().iter().enumerate() {
            if n.is_leaf() {
                assert!(counts[i] >= min_leaf, "leaf {i} holds {} rows", counts[i]);
            }
        }
    }
}

#[test]
fn same_seed_same_model() {
    let (x, y) = linear_set(200);
    let data = DataView::new(&x, 2, &y).unwrap();
    for params in [ForestParams::random_forest(12, 2), ForestParams::completely_random(12, 2)] {
        let a = Forest::fit(&data, &params, 42).unwrap();
        let b = Forest::fit(&data, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = Forest::fit(&data, &params, 43).unwrap();
        assert_ne!(a, c);
    }
    let gb = BoostingParams {
        rounds: 20,
        ..BoostingParams::default()
    };
    assert_eq!(
        GradientBoosting::fit(&data, &gb, 5).unwrap(),
        GradientBoosting::fit(&data, &gb, 5).unwrap()
    );
}

#[test]
fn derived_seeds_separate_streams() {
    assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    assert_ne!(derive_seed(7, 3), derive_seed(7, 4));
    assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
}

#[test]
fn completely_random_trees_still_fit() {
    let (x, y) = linear_set(400);
    let data = DataView::new(&x, 2, &y).unwrap();
    let params = ForestParams::completely_random(50, 2);
    assert_eq!(params.tree.splitter, Splitter::Random);
    let forest = Forest::fit(&data, &params, 11).unwrap();
    let base = rmse(&vec![mean(&y); y.len()], &y);
    assert!(rmse(&forest.predict(&x), &y) < 0.5 * base);
}

#[test]
fn random_forest_beats_the_mean() {
    let (x, y) = linear_set(400);
    let data = DataView::new(&x, 2, &y).unwrap();
    let forest = Forest::fit(&data, &ForestParams::random_forest(50, 2), 2).unwrap();
    let base = rmse(&vec![mean(&y); y.len()], &y);
    assert!(rmse(&forest.predict(&x), &y) < 0.2 * base);
}

#[test]
fn boosting_fits_a_linear_target() {
    let (x, y) = linear_set(400);
    let data = DataView::new(&x, 2, &y).unwrap();
    let few = GradientBoosting::fit(
        &data,
        &BoostingParams {
            rounds: 5,
            max_depth: 3,
            ..BoostingParams::default()
        },
        0,
    )
    .unwrap();
    let many = GradientBoosting::fit(
        &data,
        &BoostingParams {
            rounds: 200,
            max_depth: 3,
            ..BoostingParams::default()
        },
        0,
    )
    .unwrap();
    let base = rmse(&vec![mean(&y); y.len()], &y);
    assert!(few.train_rmse() < base);
    assert!(many.train_rmse() < few.train_rmse());
    assert!(many.train_rmse() < 0.05 * base);
    assert!((rmse(&many.predict(&x), &y) - many.train_rmse()).abs() < 1e-9 * base);
    assert_eq!(many.trees().len(), 200);
}

#[test]
fn predict_walks_rows() {
    let (x, y) = linear_set(60);
    let data = DataView::new(&x, 2, &y).unwrap();
    let forest = Forest::fit(&data, &ForestParams::random_forest(5, 1), 0).unwrap();
    assert_eq!(forest.n_features(), 2);
    let all = forest.predict(&x);
    assert_eq!(all.len(), 60);
    for (row, p) in x.chunks(2).zip(&all) {
        assert_eq!(forest.predict_row(row), *p);
    }
}

proptest! {
    #[test]
    fn forest_predictions_stay_in_target_range(
        rows in prop::collection::vec((-10f64..10.0, -10f64..10.0, -100f64..100.0), 5..60),
        probe in (-20f64..20.0, -20f64..20.0),
        seed in 0u64..1000,
        random in any::<bool>(),
    ) {
        let x: Vec<f64> = rows.iter().flat_map(|r| [r.0, r.1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let data = DataView::new(&x, 2, &y).unwrap();
        let params = if random {
            ForestParams::completely_random(8, 2)
        } else {
            ForestParams::random_forest(8, 2)
        };
        let forest = Forest::fit(&data, &params, seed).unwrap();
        let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = forest.predict_row(&[probe.0, probe.1]);
        prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
    }

    #[test]
    fn tree_depth_respects_cap(
        rows in prop::collection::vec((-10f64..10.0, -100f64..100.0), 2..80),
        cap in 1usize..6,
    ) {
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let data = DataView::new(&x, 1, &y).unwrap();
        let p = TreeParams { max_depth: Some(cap), ..TreeParams::default() };
        prop_assert!(RegressionTree::fit(&data, &p, 0).unwrap().depth() <= cap);
    }
}
