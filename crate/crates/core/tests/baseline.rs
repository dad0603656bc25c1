use gaptext::baseline::{
    feature_index, feature_names, featurize, fit_random_forest, kfold_grid_search, kfold_indices, parse_grid,
    rf_predict, RFConfig,
};
use gaptext::ingest::synth_generate;
use gaptext::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single_tree() -> RFConfig {
    RFConfig {
        n_trees: 1,
        max_depth: None,
        min_samples_split: 2,
        min_samples_leaf: 1,
        features_per_split: Some(1.0),
        bootstrap: false,
        seed: 0,
    }
}

fn linear_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let row: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
        y.push(3.0 * row[0] - 2.0 * row[1] + row[2] + rng.gen_range(-0.1..0.1));
        x.push(row);
    }
    (x, y)
}

fn sse(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m) * (y - m)).sum()
}

/// Left/right means of the best single variance-reduction split.
fn stump_oracle(x: &[Vec<f64>], y: &[f64]) -> (usize, f64, f64, f64) {
    let mut best = (f64::INFINITY, 0, 0.0, 0.0, 0.0);
    for f in 0..x[0].len() {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let l: Vec<f64> = (0..y.len()).filter(|&i| x[i][f] <= t).map(|i| y[i]).collect();
            let r: Vec<f64> = (0..y.len()).filter(|&i| x[i][f] > t).map(|i| y[i]).collect();
            let s = sse(&l) + sse(&r);
            if s < best.0 {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                best = (s, f, t, mean(&l), mean(&r));
            }
        }
    }
    (best.1, best.2, best.3, best.4)
}

#[test]
fn stump_matches_brute_force_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(3..12);
        let d = rng.gen_range(1..4);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = RFConfig {
            max_depth: Some(1),
            ..single_tree()
        };
        let m = fit_random_forest(&x, &y, &cfg).unwrap();
        let (f, t, l, r) = stump_oracle(&x, &y);
        for row in &x {
            let want = if row[f] <= t { l } else { r };
            assert!((m.trees[0].predict(row) - want).abs() < 1e-9);
        }
        assert_eq!(m.trees[0].n_leaves(), 2);
    }
}

#[test]
fn one_deep_tree_interpolates_distinct_rows() {
    let (x, y) = linear_data(60, 2);
    let m = fit_random_forest(&x, &y, &single_tree()).unwrap();
    let p = rf_predict(&m, &x).unwrap();
    assert!(p.iter().zip(&y).all(|(a, b)| a == b));
    assert_eq!(m.trees[0].oob_fraction, 0.0);
}

#[test]
fn forest_beats_mean_on_linear_signal() {
    let (x, y) = linear_data(400, 3);
    let (xt, yt) = (&x[..300], &y[..300]);
    let cfg = RFConfig {
        n_trees: 50,
        seed: 1,
        ..RFConfig::default()
    };
    let m = fit_random_forest(xt, yt, &cfg).unwrap();
    let p = rf_predict(&m, &x[300..]).unwrap();
    let truth = &y[300..];
    let mean = yt.iter().sum::<f64>() / yt.len() as f64;
    let mse = |p: &[f64]| p.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let sst: f64 = truth.iter().map(|t| {
        let m = truth.iter().sum::<f64>() / truth.len() as f64;
        (t - m) * (t - m)
    }).sum();
    let r2 = 1.0 - mse(&p) / sst;
    assert!(r2 > 0.5, "{r2}");
    assert!(mse(&p) < mse(&vec![mean; truth.len()]));
    let oob: f64 = m.trees.iter().map(|t| t.oob_fraction).sum::<f64>() / 50.0;
    assert!((oob - 0.368).abs() < 0.05, "{oob}");
}

#[test]
fn leaf_and_depth_limits_hold() {
    let (x, y) = linear_data(64, 4);
    let cfg = RFConfig {
        min_samples_leaf: 10,
        ..single_tree()
    };
    let m = fit_random_forest(&x, &y, &cfg).unwrap();
    assert!(m.trees[0].n_leaves() <= 6);
    let cfg = RFConfig {
        max_depth: Some(2),
        ..single_tree()
    };
    let m = fit_random_forest(&x, &y, &cfg).unwrap();
    assert!(m.trees[0].n_leaves() <= 4);
    let p = rf_predict(&m, &x).unwrap();
    let mut distinct = p.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    assert!(distinct.len() <= 4);
}

#[test]
fn forest_is_seeded_and_thread_independent() {
    let (x, y) = linear_data(80, 6);
    let cfg = RFConfig {
        n_trees: 8,
        seed: 4,
        ..RFConfig::default()
    };
    let a = fit_random_forest(&x, &y, &cfg).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = single.install(|| fit_random_forest(&x, &y, &cfg).unwrap());
    assert_eq!(a, b);
    let c = fit_random_forest(&x, &y, &RFConfig { seed: 5, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn forest_input_errors() {
    let x = vec![vec![1.0], vec![2.0]];
    assert!(matches!(fit_random_forest(&x, &[1.0], &single_tree()), Err(Error::InvalidInput(_))));
    assert!(fit_random_forest(&[vec![1.0], vec![1.0, 2.0]], &[1.0, 2.0], &single_tree()).is_err());
    assert!(matches!(
        fit_random_forest(&x, &[1.0, 2.0], &RFConfig { n_trees: 0, ..single_tree() }),
        Err(Error::Config(_))
    ));
    assert!(fit_random_forest(&x, &[1.0, 2.0], &RFConfig { features_per_split: Some(1.5), ..single_tree() }).is_err());
    let m = fit_random_forest(&x, &[1.0, 2.0], &single_tree()).unwrap();
    assert!(rf_predict(&m, &[vec![1.0, 2.0]]).is_err());
}

#[test]
fn features_are_named_and_finite() {
    let names = feature_names();
    let set = synth_generate(50, 2);
    for r in &set.records {
        let x = featurize(&r.features);
        assert_eq!(x.len(), names.len());
        assert!(x.iter().all(|v| v.is_finite()));
        assert_eq!(x[feature_index("density").unwrap()], r.features.density);
        let hot = format!("crystal_system={}", r.features.crystal_system);
        assert_eq!(x[feature_index(&hot).unwrap()], 1.0);
        let block: f64 = names
            .iter()
            .zip(&x)
            .filter(|(n, _)| n.starts_with("crystal_system="))
            .map(|(_, v)| v)
            .sum();
        assert_eq!(block, 1.0);
    }
    assert_eq!(feature_index("geometry.a"), Some(7));
    assert!(feature_index("colour").is_none());
}

#[test]
fn grid_search_prefers_the_better_config() {
    let (x, y) = linear_data(120, 7);
    let grid = vec![
        RFConfig {
            n_trees: 5,
            max_depth: Some(1),
            ..RFConfig::default()
        },
        RFConfig {
            n_trees: 20,
            ..RFConfig::default()
        },
    ];
    let r = kfold_grid_search(&x, &y, &grid, 5, 1).unwrap();
    assert_eq!(r.best_index, 1);
    assert_eq!(r.best, grid[1]);
    assert_eq!(r.table.len(), 10);
    for c in 0..2 {
        let rows: Vec<f64> = r.table.iter().filter(|t| t.config == c).map(|t| t.mae).collect();
        assert!((rows.iter().sum::<f64>() / 5.0 - r.mean_mae[c]).abs() < 1e-12);
    }
    let csv = r.to_csv();
    assert!(csv.starts_with("config,fold,mae\n\"n_trees=5;max_depth=1;"));
    assert_eq!(csv.lines().count(), 11);
    assert_eq!(r, kfold_grid_search(&x, &y, &grid, 5, 1).unwrap());
    assert!(kfold_grid_search(&x, &y, &[], 5, 1).is_err());
}

#[test]
fn grid_files_expand_to_products() {
    let g = parse_grid("# sweep\nn_trees = 10, 50\nmin_samples_leaf = 1, 2, 4 # leaves\nbootstrap = false\n").unwrap();
    assert_eq!(g.len(), 6);
    assert_eq!((g[0].n_trees, g[0].min_samples_leaf), (10, 1));
    assert_eq!((g[1].n_trees, g[1].min_samples_leaf), (10, 2));
    assert_eq!((g[5].n_trees, g[5].min_samples_leaf), (50, 4));
    assert!(g.iter().all(|c| !c.bootstrap));
    assert_eq!(parse_grid("").unwrap(), vec![RFConfig::default()]);
    let g = parse_grid("features_per_split = auto, 0.5\nmax_depth = none").unwrap();
    assert_eq!(g[0].features_per_split, None);
    assert_eq!(g[1].features_per_split, Some(0.5));
    for bad in ["n_trees", "n_trees = ", "n_trees = ten", "bootstrap = maybe", "max_depth = 0"] {
        assert!(matches!(parse_grid(bad), Err(Error::Schema { line: 1, .. })), "{bad}");
    }
}

proptest! {
    #[test]
    fn folds_partition_indices(n in 2usize..300, k in 2usize..11, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = kfold_indices(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

#[test]
fn fold_arguments_checked() {
    assert!(matches!(kfold_indices(10, 1, 0), Err(Error::Config(_))));
    assert!(matches!(kfold_indices(3, 4, 0), Err(Error::InvalidInput(_))));
}
