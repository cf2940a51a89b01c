use linboost::eval::{grid_search, grid_search_scored, kfold_split, nmse, ParamGrid};
use linboost::{fit, BoostParams, Dataset, LeafMode};
use proptest::prelude::*;

fn nonconstant() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 2..60).prop_filter("non-constant", |y| y.iter().any(|v| *v != y[0]))
}

proptest! {
    #[test]
    fn mean_predictor_scores_exactly_one(y in nonconstant()) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        prop_assert_eq!(nmse(&y, &vec![mean; y.len()]).unwrap(), 1.0);
    }

    #[test]
    fn nmse_ignores_joint_permutation(y in nonconstant(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let yhat: Vec<f64> = y.iter().map(|v| v * 0.9 + 1.0).collect();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut linboost::rng::seeded(seed));
        let py: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let pyhat: Vec<f64> = idx.iter().map(|&i| yhat[i]).collect();
        let a = nmse(&y, &yhat).unwrap();
        prop_assert!((a - nmse(&py, &pyhat).unwrap()).abs() <= 1e-12 * a.max(1.0));
    }

    /// A constant offset `c` from the truth costs `n c^2 / SST`.
    #[test]
    fn shifted_truth(y in nonconstant(), c in -10.0f64..10.0) {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let yhat: Vec<f64> = y.iter().map(|v| v + c).collect();
        let expected = n * c * c / sst;
        prop_assert!((nmse(&y, &yhat).unwrap() - expected).abs() <= 1e-9 * expected.max(1e-12));
    }

    #[test]
    fn kfold_is_a_balanced_partition(n in 2usize..300, k in 2usize..20, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![false; n];
        for f in &folds {
            prop_assert!(f.len() == n / k || f.len() == n / k + 1);
            for &i in f.indices() {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|s| *s));
    }
}

fn bumpy(n: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let y = rows
        .iter()
        .enumerate()
        .map(|(i, x)| (7.0 * x[0]).sin() + 0.2 * (((i * 7919) % 13) as f64 / 13.0 - 0.5))
        .collect();
    Dataset::from_rows(&rows, y).unwrap()
}

#[test]
fn grid_search_returns_the_lowest_scoring_combination() {
    let ds = bumpy(60);
    let mut grid = ParamGrid::for_mode(LeafMode::Constant);
    grid.learning_rate = vec![0.1, 0.5];
    grid.max_depth = vec![1, 3];
    grid.num_trees = vec![1, 5, 20];
    let scored = grid_search_scored(&ds, &grid, 5, 3).unwrap();
    assert_eq!(scored.len(), 12);
    let min = scored.iter().filter_map(|c| c.score).fold(f64::INFINITY, f64::min);
    let chosen = grid_search(&ds, &grid, 5, 3).unwrap();
    let winner = scored.iter().find(|c| c.params == chosen).unwrap();
    assert!(winner.score.unwrap() - min <= 1e-12);
    // the first of any tied minimizers
    let first = scored.iter().position(|c| c.score == Some(min)).unwrap();
    assert_eq!(scored[first].params, chosen);
}

#[test]
fn shared_prefix_scores_equal_separate_fits() {
    // scores read off a long fit must equal scores of separately fitted short models
    let ds = bumpy(40);
    let mut grid = ParamGrid::for_mode(LeafMode::Constant);
    grid.num_trees = vec![2, 6];
    let together = grid_search_scored(&ds, &grid, 4, 11).unwrap();
    for (c, trees) in together.iter().zip([2, 6]) {
        let mut g = ParamGrid::for_mode(LeafMode::Constant);
        g.num_trees = vec![trees];
        g.learning_rate = vec![0.1, 0.2];
        let alone = grid_search_scored(&ds, &g, 4, 11).unwrap();
        assert_eq!(c.score, alone[0].score);
    }
}

#[test]
fn nested_linear_model_is_chosen_on_linear_data() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0]).collect();
    let y = rows.iter().map(|x| 3.0 * x[0] - 1.0).collect();
    let ds = Dataset::from_rows(&rows, y).unwrap();
    let mut grid = ParamGrid::for_mode(LeafMode::Constant);
    grid.mode.push(LeafMode::Linear);
    grid.num_trees = vec![1];
    grid.learning_rate = vec![1.0];
    grid.gamma = vec![0.0];
    let best = grid_search(&ds, &grid, 5, 0).unwrap();
    assert_eq!(best.mode, LeafMode::Linear);
}

#[test]
fn leave_one_out_is_scored() {
    let ds = bumpy(12);
    let mut grid = ParamGrid::for_mode(LeafMode::Constant);
    grid.num_trees = vec![1, 10];
    let scored = grid_search_scored(&ds, &grid, 12, 0).unwrap();
    assert!(scored.iter().all(|c| c.score.is_some_and(f64::is_finite)));
}

#[test]
fn searched_params_refit_deterministically() {
    let ds = bumpy(50);
    let mut grid = ParamGrid::for_mode(LeafMode::Linear);
    grid.gamma = vec![0.0, 1.0];
    let p: BoostParams = grid_search(&ds, &grid, 5, 7).unwrap();
    assert_eq!(p, grid_search(&ds, &grid, 5, 7).unwrap());
    assert_eq!(fit(&ds, &p).unwrap(), fit(&ds, &p).unwrap());
}
