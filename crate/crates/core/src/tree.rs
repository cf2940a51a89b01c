//! One regression tree: exact greedy growth on second-order statistics,
//! bottom-up pruning (constant leaves) and top-down subtree pruning
//! (linear leaves).
//!
//! A split sends a sample left iff `x[feature] < threshold`. Candidate
//! thresholds are midpoints between consecutive distinct sorted values.
//! Negative-gain splits are accepted while growing; the pruning pass decides
//! what survives.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::leafsolve::{LeafModel, LeafStats, LinearLeafStats, RegularizationSpec, ScalarLeafStats, SolveScratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafMode {
    Constant,
    Linear,
}

impl LeafMode {
    pub fn empty_stats(self, n_features: usize) -> LeafStats {
        match self {
            LeafMode::Constant => LeafStats::Scalar(ScalarLeafStats::default()),
            LeafMode::Linear => LeafStats::Linear(LinearLeafStats::zeros(n_features + 1)),
        }
    }

    /// Default minimum leaf size: 1 for constant leaves, `d + 2` for linear
    /// leaves so that every leaf over-determines its `d + 1` weights.
    pub fn default_min_samples_leaf(self, n_features: usize) -> usize {
        match self {
            LeafMode::Constant => 1,
            LeafMode::Linear => n_features + 2,
        }
    }
}

impl std::fmt::Display for LeafMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LeafMode::Constant => "constant",
            LeafMode::Linear => "linear",
        })
    }
}

impl std::str::FromStr for LeafMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LeafMode::Constant),
            "linear" => Ok(LeafMode::Linear),
            other => Err(Error::invalid(format!("unknown leaf mode {other:?} (expected constant|linear)"))),
        }
    }
}

/// Depth and sample-count limits; the two count limits are enforced
/// independently of each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthLimits {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl GrowthLimits {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be >= 1"));
        }
        if self.min_samples_split == 0 {
            return Err(Error::invalid("min_samples_split must be >= 1"));
        }
        Ok(())
    }
}

impl Default for GrowthLimits {
    fn default() -> Self {
        Self {
            max_depth: 30,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }
}

/// Everything that shapes the growth of one tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub reg: RegularizationSpec,
    pub limits: GrowthLimits,
    pub mode: LeafMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `own term - left term - right term - gamma`.
    pub gain: f64,
}

impl Split {
    #[inline]
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.feature] < self.threshold
    }
}

/// A grown tree. Internal nodes keep the model and objective term they
/// would have as a leaf so pruning never re-solves.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        split: Split,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
        own_model: LeafModel,
        own_term: f64,
        count: usize,
    },
    Leaf {
        model: LeafModel,
        term: f64,
        count: usize,
    },
}

impl TreeNode {
    pub fn leaf(model: LeafModel, term: f64, count: usize) -> Self {
        TreeNode::Leaf { model, term, count }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn count(&self) -> usize {
        match self {
            TreeNode::Internal { count, .. } | TreeNode::Leaf { count, .. } => *count,
        }
    }

    /// The model and term this node has (or would have) as a leaf.
    pub fn own(&self) -> (&LeafModel, f64) {
        match self {
            TreeNode::Internal { own_model, own_term, .. } => (own_model, *own_term),
            TreeNode::Leaf { model, term, .. } => (model, *term),
        }
    }

    /// Routes `x` (already centered) to a leaf.
    pub fn find_leaf(&self, x: &[f64]) -> &TreeNode {
        let mut node = self;
        while let TreeNode::Internal { split, left, right, .. } = node {
            node = if split.goes_left(x) { left } else { right };
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.find_leaf(x) {
            TreeNode::Leaf { model, .. } => model.predict(x),
            TreeNode::Internal { .. } => unreachable!("find_leaf stops at leaves"),
        }
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                leaf => out.push(leaf),
            }
        }
        out
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
            TreeNode::Leaf { .. } => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    /// `sum of leaf terms + gamma * leaves`.
    pub fn objective(&self, gamma: f64) -> f64 {
        match self {
            TreeNode::Internal { left, right, .. } => left.objective(gamma) + right.objective(gamma),
            TreeNode::Leaf { term, .. } => term + gamma,
        }
    }

    /// Visits every internal node in pre-order.
    pub fn for_each_internal(&self, f: &mut impl FnMut(&TreeNode)) {
        if let TreeNode::Internal { left, right, .. } = self {
            f(self);
            left.for_each_internal(f);
            right.for_each_internal(f);
        }
    }
}

/// Read-only training inputs for tree growth: centered features and the
/// per-sample loss derivatives at the current predictions.
#[derive(Debug, Clone, Copy)]
pub struct GrowInput<'a> {
    pub ds: &'a Dataset,
    pub grad: &'a [f64],
    pub hess: &'a [f64],
}

impl<'a> GrowInput<'a> {
    pub fn new(ds: &'a Dataset, grad: &'a [f64], hess: &'a [f64]) -> Result<Self> {
        for len in [grad.len(), hess.len()] {
            if len != ds.n_rows() {
                return Err(Error::DimensionMismatch {
                    expected: ds.n_rows(),
                    found: len,
                });
            }
        }
        Ok(Self { ds, grad, hess })
    }

    fn stats(&self, rows: &[usize], mode: LeafMode) -> LeafStats {
        let mut stats = mode.empty_stats(self.ds.n_features());
        for &i in rows {
            stats.add(self.ds.row(i), self.grad[i], self.hess[i]);
        }
        stats
    }
}

/// Best split of `rows` over all features and thresholds, subject to both
/// children holding at least `min_samples_leaf` samples. The maximizer is
/// returned even when its gain is negative. Ties go to the lower feature
/// index, then the lower threshold.
pub fn find_best_split(input: &GrowInput<'_>, rows: &[usize], params: &TreeParams) -> Result<Option<Split>> {
    if rows.len() < params.limits.min_samples_split {
        return Ok(None);
    }
    let parent = input.stats(rows, params.mode);
    let mut scratch = SolveScratch::default();
    let parent_term = parent.objective_term(&params.reg, &mut scratch)?;
    SplitSearch::new(input, params).best(rows, parent_term)
}

struct SplitSearch<'a, 'b> {
    input: &'b GrowInput<'a>,
    params: &'b TreeParams,
    scratch: SolveScratch,
    order: Vec<usize>,
    left_terms: Vec<f64>,
}

impl<'a, 'b> SplitSearch<'a, 'b> {
    fn new(input: &'b GrowInput<'a>, params: &'b TreeParams) -> Self {
        Self {
            input,
            params,
            scratch: SolveScratch::default(),
            order: Vec::new(),
            left_terms: Vec::new(),
        }
    }

    fn best(&mut self, rows: &[usize], parent_term: f64) -> Result<Option<Split>> {
        let n = rows.len();
        let min_leaf = self.params.limits.min_samples_leaf;
        if n < self.params.limits.min_samples_split || n < 2 * min_leaf {
            return Ok(None);
        }
        let ds = self.input.ds;
        let gamma = self.params.reg.gamma;
        let mut best: Option<Split> = None;

        for feature in 0..ds.n_features() {
            self.order.clear();
            self.order.extend_from_slice(rows);
            self.order
                .sort_by(|&a, &b| ds.feature(a, feature).total_cmp(&ds.feature(b, feature)).then(a.cmp(&b)));
            // A cut after sorted position p (left = order[..=p]) is legal when
            // the value changes there and both sides are large enough.
            let legal = |order: &[usize], p: usize| {
                p + 1 >= min_leaf
                    && n - p - 1 >= min_leaf
                    && ds.feature(order[p], feature) < ds.feature(order[p + 1], feature)
            };
            if !(0..n - 1).any(|p| legal(&self.order, p)) {
                continue;
            }

            // Forward pass: left terms at each legal cut, accumulated directly.
            self.left_terms.clear();
            self.left_terms.resize(n - 1, f64::NAN);
            let mut left = self.params.mode.empty_stats(ds.n_features());
            for p in 0..n - 1 {
                let i = self.order[p];
                left.add(ds.row(i), self.input.grad[i], self.input.hess[i]);
                if legal(&self.order, p) {
                    self.left_terms[p] = left.objective_term(&self.params.reg, &mut self.scratch)?;
                }
            }

            // Backward pass: right terms, also accumulated directly so that
            // rank-deficient children are detected exactly.
            let mut right = self.params.mode.empty_stats(ds.n_features());
            let mut feature_best: Option<(usize, f64)> = None;
            for p in (0..n - 1).rev() {
                let i = self.order[p + 1];
                right.add(ds.row(i), self.input.grad[i], self.input.hess[i]);
                if legal(&self.order, p) {
                    let right_term = right.objective_term(&self.params.reg, &mut self.scratch)?;
                    let gain = parent_term - self.left_terms[p] - right_term - gamma;
                    // Scanning right to left: `>=` keeps the lowest threshold on ties.
                    if feature_best.is_none_or(|(_, g)| gain >= g) {
                        feature_best = Some((p, gain));
                    }
                }
            }

            if let Some((p, gain)) = feature_best {
                if best.is_none_or(|b| gain > b.gain) {
                    let lo = ds.feature(self.order[p], feature);
                    let hi = ds.feature(self.order[p + 1], feature);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(threshold > lo) {
                        threshold = hi;
                    }
                    best = Some(Split {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        Ok(best)
    }
}

/// Grows a tree top-down from `rows`. A branch stops at `max_depth`, below
/// `min_samples_split` samples, or when no legal split exists.
pub fn grow_tree(input: &GrowInput<'_>, rows: &[usize], params: &TreeParams) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::Empty("cannot grow a tree on zero rows".into()));
    }
    params.reg.validate()?;
    params.limits.validate()?;
    let mut search = SplitSearch::new(input, params);
    grow_node(&mut search, rows.to_vec(), 0)
}

fn grow_node(search: &mut SplitSearch<'_, '_>, rows: Vec<usize>, depth: usize) -> Result<TreeNode> {
    let params = search.params;
    let stats = search.input.stats(&rows, params.mode);
    let (model, term) = stats.solve(&params.reg)?;
    let count = rows.len();
    if depth >= params.limits.max_depth {
        return Ok(TreeNode::leaf(model, term, count));
    }
    let Some(split) = search.best(&rows, term)? else {
        return Ok(TreeNode::leaf(model, term, count));
    };
    let ds = search.input.ds;
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| split.goes_left(ds.row(i)));
    drop(rows);
    let left = grow_node(search, left_rows, depth + 1)?;
    let right = grow_node(search, right_rows, depth + 1)?;
    Ok(TreeNode::Internal {
        split,
        left: Box::new(left),
        right: Box::new(right),
        own_model: model,
        own_term: term,
        count,
    })
}

/// Post-order: an internal node whose children are both leaves collapses to
/// its own leaf model when `own - left - right - gamma < 0`.
pub fn prune_bottom_up(root: TreeNode, gamma: f64) -> TreeNode {
    prune_bottom_up_traced(root, gamma, &mut |_| {})
}

/// As [`prune_bottom_up`], reporting the change of the tree objective caused
/// by every collapse.
pub fn prune_bottom_up_traced(root: TreeNode, gamma: f64, on_collapse: &mut dyn FnMut(f64)) -> TreeNode {
    match root {
        TreeNode::Internal {
            split,
            left,
            right,
            own_model,
            own_term,
            count,
        } => {
            let left = prune_bottom_up_traced(*left, gamma, on_collapse);
            let right = prune_bottom_up_traced(*right, gamma, on_collapse);
            if let (TreeNode::Leaf { term: lt, .. }, TreeNode::Leaf { term: rt, .. }) = (&left, &right) {
                let gain = own_term - lt - rt - gamma;
                if gain < 0.0 {
                    on_collapse(gain);
                    return TreeNode::leaf(own_model, own_term, count);
                }
            }
            TreeNode::Internal {
                split,
                left: Box::new(left),
                right: Box::new(right),
                own_model,
                own_term,
                count,
            }
        }
        leaf => leaf,
    }
}

/// Pre-order: at every node whose split gain is negative, the whole subtree
/// is compared with the node as a single leaf (both including `gamma` per
/// leaf) and collapsed unless it strictly decreases the objective. Retained
/// children are examined in turn. Returns `None` when what is left is a
/// single leaf that does not strictly decrease the objective.
pub fn prune_top_down(root: TreeNode, gamma: f64) -> Option<TreeNode> {
    prune_top_down_traced(root, gamma, &mut |_| {})
}

pub fn prune_top_down_traced(root: TreeNode, gamma: f64, on_collapse: &mut dyn FnMut(f64)) -> Option<TreeNode> {
    let pruned = top_down(root, gamma, on_collapse);
    match &pruned {
        TreeNode::Leaf { term, .. } if term + gamma >= 0.0 => None,
        _ => Some(pruned),
    }
}

fn top_down(node: TreeNode, gamma: f64, on_collapse: &mut dyn FnMut(f64)) -> TreeNode {
    let TreeNode::Internal {
        split,
        left,
        right,
        own_model,
        own_term,
        count,
    } = node
    else {
        return node;
    };
    if split.gain < 0.0 {
        let subtree = left.objective(gamma) + right.objective(gamma);
        let as_leaf = own_term + gamma;
        if subtree >= as_leaf {
            on_collapse(as_leaf - subtree);
            return TreeNode::leaf(own_model, own_term, count);
        }
    }
    TreeNode::Internal {
        split,
        left: Box::new(top_down(*left, gamma, on_collapse)),
        right: Box::new(top_down(*right, gamma, on_collapse)),
        own_model,
        own_term,
        count,
    }
}

/// Prediction of a single tree on centered input.
pub fn predict_node(root: &TreeNode, x: &[f64]) -> f64 {
    root.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mode: LeafMode, lambda: f64, gamma: f64, limits: GrowthLimits) -> TreeParams {
        TreeParams {
            reg: RegularizationSpec::new(lambda, gamma).unwrap(),
            limits,
            mode,
        }
    }

    fn loose() -> GrowthLimits {
        GrowthLimits {
            max_depth: 30,
            min_samples_leaf: 1,
            min_samples_split: 2,
        }
    }

    /// Square loss at prediction 0 for the given residuals.
    fn derivs(r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (r.iter().map(|v| -2.0 * v).collect(), vec![2.0; r.len()])
    }

    fn one_d(xs: &[f64]) -> Dataset {
        Dataset::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), vec![0.0; xs.len()]).unwrap()
    }

    #[test]
    fn constant_split_on_step() {
        let ds = one_d(&[0.0, 1.0, 2.0, 3.0]);
        let (g, h) = derivs(&[0.0, 0.0, 10.0, 10.0]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let p = params(LeafMode::Constant, 0.0, 0.0, loose());
        let split = find_best_split(&input, &[0, 1, 2, 3], &p).unwrap().unwrap();
        assert_eq!(split.feature, 0);
        assert_eq!(split.threshold, 1.5);
        assert!((split.gain - 100.0).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_leaf_gains_minus_gamma() {
        let ds = one_d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let (g, h) = derivs(&[1.5; 5]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let p = params(LeafMode::Constant, 0.0, 0.7, loose());
        let split = find_best_split(&input, &[0, 1, 2, 3, 4], &p).unwrap().unwrap();
        assert!((split.gain + 0.7).abs() < 1e-12);
        // all candidates tie; the lowest threshold wins
        assert_eq!(split.threshold, 0.5);
    }

    #[test]
    fn too_few_rows_for_a_split() {
        let ds = one_d(&[0.0, 1.0, 2.0]);
        let (g, h) = derivs(&[1.0, 2.0, 3.0]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let limits = GrowthLimits {
            min_samples_split: 4,
            ..loose()
        };
        let p = params(LeafMode::Constant, 0.0, 0.0, limits);
        assert!(find_best_split(&input, &[0, 1, 2], &p).unwrap().is_none());
    }

    #[test]
    fn linear_mode_exact_parent_has_no_gain() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 - 1.0).collect();
        let ds = one_d(&xs);
        let r: Vec<f64> = xs.iter().map(|x| 3.0 * x - 0.5).collect();
        let (g, h) = derivs(&r);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let limits = GrowthLimits {
            min_samples_leaf: 3,
            ..loose()
        };
        let p = params(LeafMode::Linear, 0.0, 0.0, limits);
        let rows: Vec<usize> = (0..12).collect();
        let split = find_best_split(&input, &rows, &p).unwrap().unwrap();
        assert!(split.gain <= 1e-9, "gain {}", split.gain);
    }

    #[test]
    fn depth_zero_is_a_single_leaf() {
        let ds = one_d(&[0.0, 1.0, 2.0]);
        let (g, h) = derivs(&[1.0, 2.0, 6.0]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let limits = GrowthLimits {
            max_depth: 0,
            ..loose()
        };
        let tree = grow_tree(&input, &[0, 1, 2], &params(LeafMode::Constant, 0.0, 0.0, limits)).unwrap();
        match tree {
            TreeNode::Leaf { model, count, .. } => {
                assert_eq!(count, 3);
                assert!((model.weights()[0] - 3.0).abs() < 1e-12);
            }
            other => panic!("expected a leaf, got {other:?}"),
        }
    }

    #[test]
    fn two_points_fit_exactly() {
        let ds = one_d(&[0.2, 0.9]);
        let (g, h) = derivs(&[-1.0, 4.0]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let tree = grow_tree(&input, &[0, 1], &params(LeafMode::Constant, 0.0, 0.0, loose())).unwrap();
        assert_eq!(tree.depth(), 1);
        assert!((tree.predict(&[0.2]) + 1.0).abs() < 1e-12);
        assert!((tree.predict(&[0.9]) - 4.0).abs() < 1e-12);
    }

    fn leaf(w: f64, term: f64) -> Box<TreeNode> {
        Box::new(TreeNode::leaf(LeafModel::Constant(w), term, 1))
    }

    fn internal(gain: f64, own_term: f64, left: Box<TreeNode>, right: Box<TreeNode>) -> TreeNode {
        TreeNode::Internal {
            split: Split {
                feature: 0,
                threshold: 0.5,
                gain,
            },
            count: left.count() + right.count(),
            left,
            right,
            own_model: LeafModel::Constant(0.0),
            own_term,
        }
    }

    #[test]
    fn bottom_up_pruning() {
        // positive gain: kept
        let t = internal(1.0, -1.0, leaf(1.0, -1.5), leaf(2.0, -1.5));
        assert_eq!(prune_bottom_up(t.clone(), 0.0), t);
        // gain = -gamma: collapses
        let t = internal(-1.0, -2.0, leaf(1.0, -1.0), leaf(2.0, -1.0));
        assert!(prune_bottom_up(t, 1.0).is_leaf());
        // negative node above a positive one survives
        let lower = internal(2.0, -1.0, leaf(1.0, -2.0), leaf(2.0, -2.0));
        let t = internal(-1.0, -5.5, Box::new(lower), leaf(3.0, -0.5));
        let pruned = prune_bottom_up(t, 1.0);
        assert_eq!(pruned.n_leaves(), 3);
    }

    #[test]
    fn top_down_pruning() {
        let t = internal(1.0, -1.0, leaf(1.0, -1.5), leaf(2.0, -1.5));
        assert_eq!(prune_top_down(t.clone(), 0.0), Some(t));
        assert_eq!(prune_top_down(*leaf(0.0, 0.0), 1.0), None);
        assert!(prune_top_down(*leaf(0.0, -2.0), 1.0).is_some());
        // root gain -1 but grandchildren fit: subtree -8 + 3 = -5 < own -1 + 1
        let lower = internal(5.0, 0.0, leaf(1.0, -4.0), leaf(-1.0, -4.0));
        let t = internal(-1.0, -1.0, Box::new(lower), leaf(0.0, 0.0));
        let kept = prune_top_down(t, 1.0).unwrap();
        assert_eq!(kept.n_leaves(), 3);
    }

    #[test]
    fn prediction_routing() {
        let tree = TreeNode::leaf(LeafModel::Constant(2.5), 0.0, 1);
        assert_eq!(predict_node(&tree, &[100.0]), 2.5);
        let tree = TreeNode::leaf(LeafModel::Linear(vec![2.0, 1.0]), 0.0, 1);
        assert_eq!(predict_node(&tree, &[3.0]), 7.0);
        let tree = internal(1.0, 0.0, leaf(0.0, 0.0), leaf(1.0, 0.0));
        assert_eq!(predict_node(&tree, &[0.4]), 0.0);
        assert_eq!(predict_node(&tree, &[0.6]), 1.0);
        assert_eq!(predict_node(&tree, &[0.5]), 1.0);
    }

    #[test]
    fn adjacent_floats_get_a_separating_threshold() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let ds = one_d(&[a, b]);
        let (g, h) = derivs(&[0.0, 1.0]);
        let input = GrowInput::new(&ds, &g, &h).unwrap();
        let split = find_best_split(&input, &[0, 1], &params(LeafMode::Constant, 0.0, 0.0, loose()))
            .unwrap()
            .unwrap();
        assert!(split.goes_left(&[a]) && !split.goes_left(&[b]));
    }
}
