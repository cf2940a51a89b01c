//! Leaf solver checked against an independent normal-equations solve.

use linboost::leafsolve::{
    accumulate_linear, accumulate_scalar, leaf_objective_term, solve_constant, solve_linear, solve_linear_woodbury,
    LeafStats,
};
use linboost::{LeafModel, RegularizationSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn reg(lambda: f64) -> RegularizationSpec {
    RegularizationSpec::new(lambda, 0.0).unwrap()
}

fn augmented(xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter().map(|x| x.iter().copied().chain([1.0]).collect()).collect()
}

/// Ridge regression of `r` on `[x, 1]` with `lambda / 2` on the slopes and
/// nothing on the bias: `(X^T X + diag(lambda/2, .., 0)) w = X^T r`.
fn ridge_oracle(xs: &[Vec<f64>], r: &[f64], lambda: f64) -> DVector<f64> {
    let n = xs.len();
    let d = xs[0].len();
    let x = DMatrix::from_fn(n, d + 1, |i, k| if k < d { xs[i][k] } else { 1.0 });
    let mut a = x.transpose() * &x;
    for k in 0..d {
        a[(k, k)] += lambda / 2.0;
    }
    let b = x.transpose() * DVector::from_column_slice(r);
    a.lu().solve(&b).expect("oracle system is nonsingular")
}

fn rel_err(w: &[f64], oracle: &DVector<f64>) -> f64 {
    let diff: f64 = w.iter().zip(oracle.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / oracle.norm().max(1e-300)
}

fn square_loss(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (r.iter().map(|v| -2.0 * v).collect(), vec![2.0; r.len()])
}

fn instance(min_rows_over_dim: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1usize..=8).prop_flat_map(move |d| {
        let lo = (d + min_rows_over_dim).max(1);
        (lo..=50).prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_leaf_is_ridge_with_free_bias((xs, r) in instance(2), lambda in prop::sample::select(vec![0.0, 0.1, 1.0, 10.0])) {
        let (g, h) = square_loss(&r);
        let stats = accumulate_linear(&augmented(&xs), &g, &h).unwrap();
        let w = solve_linear(&stats, &reg(lambda)).unwrap();
        prop_assert!(matches!(w, LeafModel::Linear(_)));
        let e = rel_err(w.weights(), &ridge_oracle(&xs, &r, lambda));
        prop_assert!(e <= 1e-8, "relative error {e}");
    }

    #[test]
    fn woodbury_matches_direct((xs, r) in instance(0), lambda in 0.01f64..20.0, hs in prop::collection::vec(0.1f64..3.0, 50)) {
        let x_aug = augmented(&xs);
        let g: Vec<f64> = r.iter().map(|v| -2.0 * v).collect();
        let h = hs[..g.len()].to_vec();
        let direct = solve_linear(&accumulate_linear(&x_aug, &g, &h).unwrap(), &reg(lambda)).unwrap();
        let wood = solve_linear_woodbury(&x_aug, &g, &h, &reg(lambda)).unwrap();
        let oracle = DVector::from_column_slice(direct.weights());
        prop_assert!(rel_err(wood.weights(), &oracle) <= 1e-8);
    }

    #[test]
    fn optimum_is_stationary_and_term_is_nonpositive((xs, r) in instance(2), lambda in 0.0f64..5.0) {
        let (g, h) = square_loss(&r);
        let x_aug = augmented(&xs);
        let stats = accumulate_linear(&x_aug, &g, &h).unwrap();
        let w = solve_linear(&stats, &reg(lambda)).unwrap();
        let dim = stats.dim();
        // (Lambda + H~) w + g~ = 0
        let hm = stats.hessian_matrix();
        for k in 0..dim {
            let mut v = stats.grad()[k];
            for j in 0..dim {
                v += hm[k * dim + j] * w.weights()[j];
            }
            if k + 1 < dim {
                v += lambda * w.weights()[k];
            }
            prop_assert!(v.abs() <= 1e-8 * (1.0 + stats.grad()[k].abs()), "row {k}: {v}");
        }
        prop_assert!(leaf_objective_term(&w, &LeafStats::Linear(stats)) <= 1e-12);
    }
}

#[test]
fn two_hundred_oracle_instances_in_time() {
    use rand::{Rng, SeedableRng};
    let start = std::time::Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let lambda = [0.0, 0.1, 1.0, 10.0][case % 4];
        let d = rng.random_range(1..=8);
        let lo = if lambda == 0.0 { d + 2 } else { 1 };
        let n = rng.random_range(lo..=50);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (g, h) = square_loss(&r);
        let w = solve_linear(&accumulate_linear(&augmented(&xs), &g, &h).unwrap(), &reg(lambda)).unwrap();
        let e = rel_err(w.weights(), &ridge_oracle(&xs, &r, lambda));
        assert!(e <= 1e-8, "case {case} (n={n}, d={d}, lambda={lambda}): {e}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn huge_lambda_leaves_only_the_bias() {
    let xs = vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![2.0, 0.5], vec![3.0, 2.0]];
    let r = [1.0, 4.0, -2.0, 5.0];
    let (g, h) = square_loss(&r);
    let stats = accumulate_linear(&augmented(&xs), &g, &h).unwrap();
    let w = solve_linear(&stats, &reg(1e12)).unwrap();
    let c = solve_constant(&accumulate_scalar(&g, &h).unwrap(), &reg(0.0)).unwrap();
    assert!(w.weights()[..2].iter().all(|v| v.abs() < 1e-9));
    assert!((w.weights()[2] - c.weights()[0]).abs() < 1e-9);
    assert!((c.weights()[0] - 2.0).abs() < 1e-15);
}

#[test]
fn rank_deficient_leaf_falls_back_to_constant() {
    // all rows share the same x: the slope is unidentified
    let xs = vec![vec![0.5]; 4];
    let r = [1.0, 2.0, 3.0, 6.0];
    let (g, h) = square_loss(&r);
    let w = solve_linear(&accumulate_linear(&augmented(&xs), &g, &h).unwrap(), &reg(0.0)).unwrap();
    assert_eq!(w, LeafModel::Constant(3.0));
}

#[test]
fn linear_leaf_never_worse_than_constant() {
    let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64 * 0.7).sin(), i as f64 / 11.0]).collect();
    let r: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let (g, h) = square_loss(&r);
    for lambda in [0.0, 0.3, 3.0] {
        let lin = LeafStats::Linear(accumulate_linear(&augmented(&xs), &g, &h).unwrap());
        let con = LeafStats::Scalar(accumulate_scalar(&g, &h).unwrap());
        let (_, lt) = lin.solve(&reg(lambda)).unwrap();
        let (_, ct) = con.solve(&reg(0.0)).unwrap();
        assert!(lt <= ct + 1e-12, "lambda {lambda}: {lt} > {ct}");
    }
}
