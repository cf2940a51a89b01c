//! The boosting loop.
//!
//! Round `t` evaluates the loss derivatives at the current predictions,
//! grows a tree on a (possibly subsampled) set of rows, prunes it according
//! to the leaf mode and adds `learning_rate * tree` to the model. Features
//! are centered once, on the training data, and the transform is stored with
//! the model so that prediction takes raw features.

mod io;

use serde::{Deserialize, Serialize};

pub use io::{from_json, load_model, save_model, to_json, FORMAT_VERSION};

use crate::data::{self, CenteringTransform, Dataset, SampleIndexSet};
use crate::error::{Error, Result};
use crate::leafsolve::RegularizationSpec;
use crate::rng;
use crate::tree::{self, GrowInput, GrowthLimits, LeafMode, TreeNode, TreeParams};

/// A twice-differentiable loss with non-negative second derivative.
pub trait LossFunction {
    /// `(dl/dyhat, d2l/dyhat2)` at `(y, yhat)`.
    fn derivatives(&self, y: f64, yhat: f64) -> (f64, f64);
}

/// `l(y, yhat) = (y - yhat)^2`: `g = 2 (yhat - y)`, `h = 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SquareLoss;

impl LossFunction for SquareLoss {
    #[inline]
    fn derivatives(&self, y: f64, yhat: f64) -> (f64, f64) {
        (2.0 * (yhat - y), 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub reg: RegularizationSpec,
    pub limits: GrowthLimits,
    pub subsample: f64,
    pub mode: LeafMode,
    pub seed: u64,
}

impl BoostParams {
    /// Defaults for a dataset with `n_features` columns: 100 trees for
    /// constant leaves, 3 for linear leaves, learning rate 0.1, `gamma = 3`,
    /// `lambda = 0`, depth 30 and the mode's default leaf size.
    pub fn defaults(mode: LeafMode, n_features: usize) -> Self {
        let min_leaf = mode.default_min_samples_leaf(n_features);
        Self {
            num_trees: match mode {
                LeafMode::Constant => 100,
                LeafMode::Linear => 3,
            },
            learning_rate: 0.1,
            reg: RegularizationSpec::default(),
            limits: GrowthLimits {
                max_depth: 30,
                min_samples_leaf: min_leaf,
                min_samples_split: 2,
            },
            subsample: 1.0,
            mode,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::invalid("num_trees must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "learning_rate {} not in (0, 1]",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::invalid(format!("subsample {} not in (0, 1]", self.subsample)));
        }
        self.reg.validate()?;
        self.limits.validate()
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            reg: self.reg,
            limits: self.limits,
            mode: self.mode,
        }
    }
}

/// A trained model: `yhat(x) = base + sum_k lr * tree_k(x - means)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trees: Vec<TreeNode>,
    pub centering: CenteringTransform,
    pub base_prediction: f64,
    pub params: BoostParams,
    pub feature_names: Option<Vec<String>>,
    pub target_name: Option<String>,
}

impl Ensemble {
    pub fn n_features(&self) -> usize {
        self.centering.dim()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        let mut centered = vec![0.0; self.n_features()];
        self.predict_row_with(x, &mut centered)
    }

    fn predict_row_with(&self, x: &[f64], centered: &mut [f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        self.centering.apply_row(x, centered);
        let lr = self.params.learning_rate;
        let mut y = self.base_prediction;
        for tree in &self.trees {
            y += lr * tree.predict(centered);
        }
        Ok(y)
    }

    /// Predictions for every row of `ds`.
    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let mut centered = vec![0.0; self.n_features()];
        ds.rows().map(|x| self.predict_row_with(x, &mut centered)).collect()
    }

    /// The first `k` trees of this model. Because each round depends only on
    /// earlier rounds, this is exactly the model `fit` returns for
    /// `num_trees = k`.
    pub fn truncated(&self, k: usize) -> Ensemble {
        let mut out = self.clone();
        out.trees.truncate(k);
        out.params.num_trees = k.min(self.params.num_trees);
        out
    }
}

pub fn predict(model: &Ensemble, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut centered = vec![0.0; model.n_features()];
    xs.iter().map(|x| model.predict_row_with(x, &mut centered)).collect()
}

/// Per-round record produced by [`fit_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    /// `None` when the tree was removed by pruning (training stops).
    pub tree_objective: Option<f64>,
    /// Training predictions on all rows after this round.
    pub predictions: Vec<f64>,
}

pub fn fit(ds: &Dataset, params: &BoostParams) -> Result<Ensemble> {
    fit_with_loss(ds, params, &SquareLoss, &mut |_| {})
}

/// As [`fit`], also returning the state after every round.
pub fn fit_traced(ds: &Dataset, params: &BoostParams) -> Result<(Ensemble, Vec<RoundTrace>)> {
    let mut trace = Vec::new();
    let model = fit_with_loss(ds, params, &SquareLoss, &mut |t| trace.push(t))?;
    Ok((model, trace))
}

pub fn fit_with_loss(
    ds: &Dataset,
    params: &BoostParams,
    loss: &dyn LossFunction,
    on_round: &mut dyn FnMut(RoundTrace),
) -> Result<Ensemble> {
    params.validate()?;
    let n = ds.n_rows();
    let centering = data::fit_centering(ds);
    let centered = centering.apply(ds)?;
    let y = ds.targets();
    let base_prediction = y.iter().sum::<f64>() / n as f64;
    let tree_params = params.tree_params();

    let mut preds = vec![base_prediction; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(params.num_trees);

    for round in 0..params.num_trees {
        for i in 0..n {
            let (g, h) = loss.derivatives(y[i], preds[i]);
            grad[i] = g;
            hess[i] = h;
        }
        let rows = if params.subsample < 1.0 {
            data::subsample(n, params.subsample, rng::derive_seed(params.seed, round as u64))?
        } else {
            SampleIndexSet::all(n)
        };
        let input = GrowInput::new(&centered, &grad, &hess)?;
        let grown = tree::grow_tree(&input, rows.indices(), &tree_params)?;
        let gamma = params.reg.gamma;
        let pruned = match params.mode {
            LeafMode::Constant => Some(tree::prune_bottom_up(grown, gamma)),
            LeafMode::Linear => tree::prune_top_down(grown, gamma),
        };
        let Some(tree) = pruned else {
            on_round(RoundTrace {
                tree_objective: None,
                predictions: preds.clone(),
            });
            break;
        };
        for (i, x) in centered.rows().enumerate() {
            preds[i] += params.learning_rate * tree.predict(x);
            if !preds[i].is_finite() {
                return Err(Error::NonFinite(format!("training prediction for row {i} in round {round}")));
            }
        }
        on_round(RoundTrace {
            tree_objective: Some(tree.objective(gamma)),
            predictions: preds.clone(),
        });
        trees.push(tree);
    }

    Ok(Ensemble {
        trees,
        centering,
        base_prediction,
        params: *params,
        feature_names: ds.feature_names().map(<[String]>::to_vec),
        target_name: ds.target_name().map(str::to_string),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leafsolve::LeafModel;

    fn line_data() -> Dataset {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::from_rows(&rows, xs.iter().map(|x| 2.0 * x + 1.0).collect()).unwrap()
    }

    #[test]
    fn square_loss_derivatives() {
        assert_eq!(SquareLoss.derivatives(3.0, 1.0), (-4.0, 2.0));
    }

    #[test]
    fn depth_zero_constant_predicts_mean() {
        let ds = line_data();
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.num_trees = 1;
        p.learning_rate = 1.0;
        p.reg = RegularizationSpec::new(0.0, 0.0).unwrap();
        p.limits.max_depth = 0;
        let model = fit(&ds, &p).unwrap();
        let mean = ds.targets().iter().sum::<f64>() / 10.0;
        for yhat in model.predict_dataset(&ds).unwrap() {
            assert!((yhat - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn single_linear_leaf_recovers_line() {
        let ds = line_data();
        let mut p = BoostParams::defaults(LeafMode::Linear, 1);
        p.num_trees = 1;
        p.learning_rate = 1.0;
        p.reg = RegularizationSpec::new(0.0, 0.0).unwrap();
        p.limits.min_samples_split = 100;
        let model = fit(&ds, &p).unwrap();
        assert_eq!(model.trees.len(), 1);
        assert!(model.trees[0].is_leaf());
        let yhat = model.predict_row(&[0.25]).unwrap();
        assert!((yhat - 1.5).abs() < 1e-12);
    }

    #[test]
    fn shrinkage_arithmetic_and_empty_model() {
        let ds = line_data();
        let mut model = fit(&ds, &BoostParams::defaults(LeafMode::Constant, 1)).unwrap();
        model.trees.clear();
        model.base_prediction = 4.0;
        assert_eq!(model.predict_row(&[123.0]).unwrap(), 4.0);
        model.base_prediction = 0.0;
        model.params.learning_rate = 0.1;
        model.trees.push(TreeNode::leaf(LeafModel::Constant(1.0), 0.0, 1));
        assert_eq!(model.predict_row(&[0.3]).unwrap(), 0.1);
        assert!(matches!(model.predict_row(&[0.3, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_params_rejected() {
        let ds = line_data();
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.num_trees = 0;
        assert!(fit(&ds, &p).is_err());
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.learning_rate = 1.5;
        assert!(fit(&ds, &p).is_err());
        let mut p = BoostParams::defaults(LeafMode::Constant, 1);
        p.subsample = 0.0;
        assert!(fit(&ds, &p).is_err());
    }
}
