//! Model assessment: NMSE, k-fold cross-validation, exhaustive grid search
//! and repeated experiments.

mod bench;
mod experiment;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{self, BoostParams, Ensemble};
use crate::data::{Dataset, SampleIndexSet};
use crate::error::{Error, Result};
use crate::leafsolve::RegularizationSpec;
use crate::rng;
use crate::tree::{GrowthLimits, LeafMode};

pub use bench::{BenchExperiment, BenchOptions, BenchReport, PlotData};
pub use experiment::{
    run_experiment, run_experiment_with, DataSource, ExperimentConfig, ExperimentReport, RunResult, Sampling,
    TestSource,
};

/// Normalized mean square error `sum (y - yhat)^2 / sum (y - mean(y))^2`.
pub fn nmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: yhat.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::invalid("nmse needs at least two values"));
    }
    let (sse, sst) = sums_of_squares(y, yhat);
    if sst == 0.0 {
        return Err(Error::invalid("nmse is undefined for a constant target"));
    }
    Ok(sse / sst)
}

fn sums_of_squares(y: &[f64], yhat: &[f64]) -> (f64, f64) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sse = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    (sse, sst)
}

/// Shuffles `0..n` and cuts it into `k` folds; the first `n % k` folds get
/// one extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<SampleIndexSet>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(SampleIndexSet::new(order[start..start + len].to_vec(), n)?);
        start += len;
    }
    Ok(folds)
}

/// Candidate values for a grid search. An empty list means "the default
/// for the mode" (see [`BoostParams::defaults`]); `mode` must be non-empty.
///
/// Combinations are enumerated with `mode` varying slowest and `num_trees`
/// fastest, in the field order below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub mode: Vec<LeafMode>,
    #[serde(default)]
    pub learning_rate: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub max_depth: Vec<usize>,
    #[serde(default)]
    pub min_samples_leaf: Vec<usize>,
    #[serde(default)]
    pub min_samples_split: Vec<usize>,
    #[serde(default)]
    pub subsample: Vec<f64>,
    #[serde(default)]
    pub num_trees: Vec<usize>,
}

impl ParamGrid {
    /// A grid over one mode with every other field at its default.
    pub fn for_mode(mode: LeafMode) -> Self {
        Self {
            mode: vec![mode],
            learning_rate: vec![],
            lambda: vec![],
            gamma: vec![],
            max_depth: vec![],
            min_samples_leaf: vec![],
            min_samples_split: vec![],
            subsample: vec![],
            num_trees: vec![],
        }
    }

    /// The one-point grid holding exactly `p` (its seed is not part of the grid).
    pub fn single(p: &BoostParams) -> Self {
        Self {
            mode: vec![p.mode],
            learning_rate: vec![p.learning_rate],
            lambda: vec![p.reg.lambda],
            gamma: vec![p.reg.gamma],
            max_depth: vec![p.limits.max_depth],
            min_samples_leaf: vec![p.limits.min_samples_leaf],
            min_samples_split: vec![p.limits.min_samples_split],
            subsample: vec![p.subsample],
            num_trees: vec![p.num_trees],
        }
    }

    /// All combinations for data with `n_features` columns, each validated.
    pub fn combinations(&self, n_features: usize, seed: u64) -> Result<Vec<BoostParams>> {
        if self.mode.is_empty() {
            return Err(Error::invalid("parameter grid has no leaf mode"));
        }
        fn or_default<T: Copy>(values: &[T], default: T) -> Vec<T> {
            if values.is_empty() {
                vec![default]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for &mode in &self.mode {
            let d = BoostParams::defaults(mode, n_features);
            for &learning_rate in &or_default(&self.learning_rate, d.learning_rate) {
                for &lambda in &or_default(&self.lambda, d.reg.lambda) {
                    for &gamma in &or_default(&self.gamma, d.reg.gamma) {
                        for &max_depth in &or_default(&self.max_depth, d.limits.max_depth) {
                            for &min_samples_leaf in &or_default(&self.min_samples_leaf, d.limits.min_samples_leaf) {
                                for &min_samples_split in
                                    &or_default(&self.min_samples_split, d.limits.min_samples_split)
                                {
                                    for &subsample in &or_default(&self.subsample, d.subsample) {
                                        for &num_trees in &or_default(&self.num_trees, d.num_trees) {
                                            let p = BoostParams {
                                                num_trees,
                                                learning_rate,
                                                reg: RegularizationSpec { lambda, gamma },
                                                limits: GrowthLimits {
                                                    max_depth,
                                                    min_samples_leaf,
                                                    min_samples_split,
                                                },
                                                subsample,
                                                mode,
                                                seed,
                                            };
                                            p.validate()?;
                                            out.push(p);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One evaluated grid point; `score` is `None` when every fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub params: BoostParams,
    pub score: Option<f64>,
}

/// The combination with the lowest mean validation NMSE over `k` folds;
/// ties go to the earliest combination.
pub fn grid_search(ds: &Dataset, grid: &ParamGrid, k: usize, seed: u64) -> Result<BoostParams> {
    let combos = grid.combinations(ds.n_features(), rng::derive_seed(seed, 1))?;
    if let [only] = combos.as_slice() {
        return Ok(*only);
    }
    best_candidate(&evaluate_candidates(ds, &combos, k, seed)?)
}

/// Scores every combination of `grid` by k-fold cross-validation.
pub fn grid_search_scored(ds: &Dataset, grid: &ParamGrid, k: usize, seed: u64) -> Result<Vec<Candidate>> {
    let combos = grid.combinations(ds.n_features(), rng::derive_seed(seed, 1))?;
    evaluate_candidates(ds, &combos, k, seed)
}

pub fn best_candidate(candidates: &[Candidate]) -> Result<BoostParams> {
    let mut best: Option<(&Candidate, f64)> = None;
    for c in candidates {
        if let Some(s) = c.score {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((c, s));
            }
        }
    }
    best.map(|(c, _)| c.params)
        .ok_or_else(|| Error::invalid("no combination could be scored"))
}

/// Combinations that differ only in `num_trees` share one fit: the model
/// with the most trees is grown once and every smaller count is read off
/// its prefix.
fn evaluate_candidates(ds: &Dataset, combos: &[BoostParams], k: usize, seed: u64) -> Result<Vec<Candidate>> {
    let folds = kfold_split(ds.n_rows(), k, seed)?;
    let mut groups: Vec<(BoostParams, Vec<usize>)> = Vec::new();
    for (i, p) in combos.iter().enumerate() {
        let mut key = *p;
        key.num_trees = 0;
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let tasks: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..folds.len()).map(move |f| (g, f)))
        .collect();
    // results[g * k + f][m] = (sse, sst) of member m of group g on fold f
    let results: Vec<Result<Vec<(f64, f64)>>> = tasks
        .par_iter()
        .map(|&(g, f)| {
            let (key, members) = &groups[g];
            let counts: Vec<usize> = members.iter().map(|&i| combos[i].num_trees).collect();
            fold_errors(ds, &folds[f], key, &counts)
        })
        .collect();

    let mut errors = Vec::new();
    let mut out: Vec<Candidate> = combos
        .iter()
        .map(|p| Candidate {
            params: *p,
            score: None,
        })
        .collect();
    for (g, (_, members)) in groups.iter().enumerate() {
        let per_fold: Vec<&Result<Vec<(f64, f64)>>> = (0..folds.len()).map(|f| &results[g * folds.len() + f]).collect();
        if let Some(Err(e)) = per_fold.iter().find(|r| r.is_err()) {
            errors.push(e.to_string());
            continue;
        }
        for (m, &i) in members.iter().enumerate() {
            let sums: Vec<(f64, f64)> = per_fold.iter().map(|r| r.as_ref().unwrap()[m]).collect();
            out[i].score = Some(cv_score(&sums));
        }
    }
    if out.iter().all(|c| c.score.is_none()) {
        let first = errors.into_iter().next().unwrap_or_else(|| "no combinations".into());
        return Err(Error::AllCombinationsFailed(Box::new(Error::invalid(first))));
    }
    Ok(out)
}

/// Mean NMSE over the folds where it is defined. When no fold has a
/// non-constant target (e.g. leave-one-out) the pooled ratio is used.
fn cv_score(sums: &[(f64, f64)]) -> f64 {
    let defined: Vec<f64> = sums.iter().filter(|(_, sst)| *sst > 0.0).map(|(sse, sst)| sse / sst).collect();
    if !defined.is_empty() {
        return defined.iter().sum::<f64>() / defined.len() as f64;
    }
    let sse: f64 = sums.iter().map(|s| s.0).sum();
    sse / sums.len() as f64
}

/// Fits `key` with `max(counts)` trees on the complement of `fold` and
/// returns `(sse, sst)` on the fold for each tree count.
fn fold_errors(ds: &Dataset, fold: &SampleIndexSet, key: &BoostParams, counts: &[usize]) -> Result<Vec<(f64, f64)>> {
    let train = ds.select(&fold.complement(ds.n_rows()));
    let val = ds.select(fold);
    let mut p = *key;
    p.num_trees = counts.iter().copied().max().unwrap_or(1);
    let model = boosting::fit(&train, &p)?;
    let stages = staged_predictions(&model, &val, counts);
    Ok(stages.iter().map(|yhat| sums_of_squares(val.targets(), yhat)).collect())
}

/// Predictions of `model.truncated(c)` for each `c` in `counts`, computed in
/// one pass over the trees.
pub fn staged_predictions(model: &Ensemble, ds: &Dataset, counts: &[usize]) -> Vec<Vec<f64>> {
    let lr = model.params.learning_rate;
    let mut out = vec![vec![0.0; ds.n_rows()]; counts.len()];
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&j| counts[j]);
    let mut centered = vec![0.0; model.n_features()];
    for (i, x) in ds.rows().enumerate() {
        model.centering.apply_row(x, &mut centered);
        let mut y = model.base_prediction;
        let mut done = 0;
        for &j in &order {
            let upto = counts[j].min(model.trees.len());
            for tree in &model.trees[done..upto] {
                y += lr * tree.predict(&centered);
            }
            done = upto;
            out[j][i] = y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nmse_examples() {
        let y = [1.0, 2.0, 4.0];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        let mean = 7.0 / 3.0;
        assert!((nmse(&y, &[mean; 3]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmse(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(nmse(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(nmse(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn kfold_shapes() {
        let folds = kfold_split(10, 10, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let mut sizes: Vec<usize> = kfold_split(10, 3, 5).unwrap().iter().map(|f| f.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![3, 3, 4]);
        let folds = kfold_split(23, 4, 1).unwrap();
        let mut all: Vec<usize> = folds.iter().flat_map(|f| f.indices().to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert_eq!(folds, kfold_split(23, 4, 1).unwrap());
        assert!(kfold_split(3, 4, 0).is_err());
        assert!(kfold_split(3, 1, 0).is_err());
    }

    #[test]
    fn grid_order_and_defaults() {
        let mut g = ParamGrid::for_mode(LeafMode::Linear);
        g.gamma = vec![0.0, 1.0];
        g.num_trees = vec![1, 2];
        let combos = g.combinations(2, 0).unwrap();
        let got: Vec<(f64, usize)> = combos.iter().map(|p| (p.reg.gamma, p.num_trees)).collect();
        assert_eq!(got, vec![(0.0, 1), (0.0, 2), (1.0, 1), (1.0, 2)]);
        assert!(combos.iter().all(|p| p.limits.min_samples_leaf == 4));
        g.learning_rate = vec![2.0];
        assert!(g.combinations(2, 0).is_err());
        g.mode.clear();
        assert!(g.combinations(2, 0).is_err());
    }

    #[test]
    fn staged_predictions_match_truncation() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 29.0]).collect();
        let y = rows.iter().map(|r| (5.0 * r[0]).sin()).collect();
        let ds = Dataset::from_rows(&rows, y).unwrap();
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.num_trees = 6;
        p.reg.gamma = 0.0;
        let model = boosting::fit(&ds, &p).unwrap();
        let counts = [4, 1, 6];
        let stages = staged_predictions(&model, &ds, &counts);
        for (c, yhat) in counts.iter().zip(&stages) {
            assert_eq!(&model.truncated(*c).predict_dataset(&ds).unwrap(), yhat);
        }
    }

    #[test]
    fn single_combination_short_circuits() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows(&rows, vec![0.0, 1.0, 2.0]).unwrap();
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.num_trees = 7;
        let got = grid_search(&ds, &ParamGrid::single(&p), 10, 0).unwrap();
        assert_eq!(got.num_trees, 7);
    }
}
