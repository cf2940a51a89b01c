//! Leaf statistics and optimal leaf weights.
//!
//! With first/second loss derivatives `g_i`, `h_i` at the current
//! predictions, a constant leaf minimizes `G w + (H + lambda) w^2 / 2` and a
//! linear leaf on the augmented input `[x, 1]` minimizes
//! `g~.w + w^T (Lambda + H~) w / 2` with `Lambda = diag(lambda, .., lambda, 0)`.
//! The bias is never penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative pivot floor below which a symmetric factorization is rejected.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationSpec {
    /// L2 penalty on leaf weights (feature weights only for linear leaves).
    pub lambda: f64,
    /// Penalty per leaf.
    pub gamma: f64,
}

impl RegularizationSpec {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let reg = Self { lambda, gamma };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for RegularizationSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            gamma: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScalarLeafStats {
    pub grad_sum: f64,
    pub hess_sum: f64,
    pub count: usize,
}

impl ScalarLeafStats {
    pub fn add(&mut self, g: f64, h: f64) {
        self.grad_sum += g;
        self.hess_sum += h;
        self.count += 1;
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            grad_sum: self.grad_sum - other.grad_sum,
            hess_sum: self.hess_sum - other.hess_sum,
            count: self.count - other.count,
        }
    }
}

/// `g~ = sum g_i x~_i` and `H~ = sum h_i x~_i x~_i^T` over a leaf's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLeafStats {
    dim: usize,
    grad: Vec<f64>,
    /// Full symmetric matrix, row-major.
    hess: Vec<f64>,
    count: usize,
}

impl LinearLeafStats {
    /// Empty aggregates for augmented inputs of length `dim` (= d + 1).
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            grad: vec![0.0; dim],
            hess: vec![0.0; dim * dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn hess(&self) -> &[f64] {
        &self.hess
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one sample given its raw (non-augmented) features.
    pub fn add(&mut self, x: &[f64], g: f64, h: f64) {
        let dim = self.dim;
        debug_assert_eq!(x.len() + 1, dim);
        let xi = |k: usize| if k + 1 == dim { 1.0 } else { x[k] };
        for i in 0..dim {
            let a = xi(i);
            self.grad[i] += g * a;
            let ha = h * a;
            let row = &mut self.hess[i * dim..(i + 1) * dim];
            for (j, cell) in row.iter_mut().enumerate().skip(i) {
                *cell += ha * xi(j);
            }
        }
        self.count += 1;
    }

    /// Mirrors the upper triangle filled by [`add`](Self::add).
    fn symmetrized(&self) -> Vec<f64> {
        let dim = self.dim;
        let mut m = self.hess.clone();
        for i in 0..dim {
            for j in 0..i {
                m[i * dim + j] = m[j * dim + i];
            }
        }
        m
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            grad: self.grad.iter().zip(&other.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&other.hess).map(|(a, b)| a - b).collect(),
            count: self.count - other.count,
        }
    }

    /// Aggregates of the constant model: the bias components `G`, `H`.
    pub fn scalar(&self) -> ScalarLeafStats {
        let b = self.dim - 1;
        ScalarLeafStats {
            grad_sum: self.grad[b],
            hess_sum: self.hess[b * self.dim + b],
            count: self.count,
        }
    }

    /// `H~` as a full symmetric matrix.
    pub fn hessian_matrix(&self) -> Vec<f64> {
        self.symmetrized()
    }
}

/// Statistics in the shape required by a leaf mode.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafStats {
    Scalar(ScalarLeafStats),
    Linear(LinearLeafStats),
}

impl LeafStats {
    pub fn count(&self) -> usize {
        match self {
            LeafStats::Scalar(s) => s.count,
            LeafStats::Linear(s) => s.count,
        }
    }

    pub fn add(&mut self, x: &[f64], g: f64, h: f64) {
        match self {
            LeafStats::Scalar(s) => s.add(g, h),
            LeafStats::Linear(s) => s.add(x, g, h),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        match (self, other) {
            (LeafStats::Scalar(a), LeafStats::Scalar(b)) => LeafStats::Scalar(a.minus(b)),
            (LeafStats::Linear(a), LeafStats::Linear(b)) => LeafStats::Linear(a.minus(b)),
            _ => panic!("cannot subtract leaf statistics of different shapes"),
        }
    }

    pub fn scalar(&self) -> ScalarLeafStats {
        match self {
            LeafStats::Scalar(s) => *s,
            LeafStats::Linear(s) => s.scalar(),
        }
    }

    /// Optimal model for these statistics and its objective term.
    pub fn solve(&self, reg: &RegularizationSpec) -> Result<(LeafModel, f64)> {
        let model = match self {
            LeafStats::Scalar(s) => solve_constant(s, reg)?,
            LeafStats::Linear(s) => solve_linear(s, reg)?,
        };
        let term = leaf_objective_term(&model, self);
        Ok((model, term))
    }
}

/// The prediction rule stored at a leaf.
#[derive(Debug, Clone, PartialEq)]
pub enum LeafModel {
    Constant(f64),
    /// Weights on `[x, 1]`; the last entry is the bias.
    Linear(Vec<f64>),
}

impl LeafModel {
    /// Evaluates the leaf on (already centered) features.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            LeafModel::Constant(w) => *w,
            LeafModel::Linear(w) => {
                let (bias, slopes) = w.split_last().expect("linear leaf has a bias");
                slopes.iter().zip(x).fold(*bias, |acc, (a, b)| acc + a * b)
            }
        }
    }

    pub fn weights(&self) -> &[f64] {
        match self {
            LeafModel::Constant(w) => std::slice::from_ref(w),
            LeafModel::Linear(w) => w,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights().iter().all(|w| w.is_finite())
    }
}

fn check_lengths(g: &[f64], h: &[f64]) -> Result<()> {
    if g.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            found: h.len(),
        });
    }
    if g.is_empty() {
        return Err(Error::Empty("leaf has no samples".into()));
    }
    if let Some(v) = h.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("second derivative {v} is negative or NaN")));
    }
    Ok(())
}

pub fn accumulate_scalar(g: &[f64], h: &[f64]) -> Result<ScalarLeafStats> {
    check_lengths(g, h)?;
    let mut s = ScalarLeafStats::default();
    for (&gi, &hi) in g.iter().zip(h) {
        s.add(gi, hi);
    }
    Ok(s)
}

/// Accumulates `g~` and `H~` from augmented rows `x~_i = [x_i, 1]`.
pub fn accumulate_linear(x_aug: &[Vec<f64>], g: &[f64], h: &[f64]) -> Result<LinearLeafStats> {
    check_lengths(g, h)?;
    if x_aug.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: g.len(),
            found: x_aug.len(),
        });
    }
    let dim = x_aug[0].len();
    if dim < 2 {
        return Err(Error::invalid("augmented rows need at least one feature and the bias"));
    }
    let mut s = LinearLeafStats::zeros(dim);
    for ((x, &gi), &hi) in x_aug.iter().zip(g).zip(h) {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().chain([&gi, &hi]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("leaf sample".into()));
        }
        s.add(&x[..dim - 1], gi, hi);
    }
    Ok(s)
}

/// `w* = -G / (H + lambda)`.
pub fn solve_constant(stats: &ScalarLeafStats, reg: &RegularizationSpec) -> Result<LeafModel> {
    let denom = stats.hess_sum + reg.lambda;
    if !(denom > 0.0) {
        return Err(Error::DegenerateLeaf(format!(
            "H + lambda = {denom} with {} samples",
            stats.count
        )));
    }
    Ok(LeafModel::Constant(-stats.grad_sum / denom))
}

/// `w* = -(Lambda + H~)^{-1} g~` by Cholesky factorization, or the constant
/// model when `Lambda + H~` is not numerically positive definite.
pub fn solve_linear(stats: &LinearLeafStats, reg: &RegularizationSpec) -> Result<LeafModel> {
    let dim = stats.dim;
    let mut c = stats.symmetrized();
    for i in 0..dim - 1 {
        c[i * dim + i] += reg.lambda;
    }
    let Some(chol) = Cholesky::factor(&c, dim) else {
        return solve_constant(&stats.scalar(), reg);
    };
    let mut w = chol.solve(&stats.grad);
    w.iter_mut().for_each(|v| *v = -*v);
    let model = LeafModel::Linear(w);
    if !model.is_finite() {
        return Err(Error::NonFinite("linear leaf weights".into()));
    }
    Ok(model)
}

/// The linear-leaf weights through an `m x m` system, `m` = sample count.
///
/// The unpenalized bias is eliminated first: with `S = sum h_i`,
/// `mu = sum h_i x_i / S` and `z_i = sqrt(h_i) (x_i - mu)`, the slopes solve
/// `(lambda I + Z^T Z) v = -sum g_i (x_i - mu)`, which the Woodbury identity
/// turns into `v = (r - Z^T (lambda I_m + Z Z^T)^{-1} Z r) / lambda`. The bias
/// follows as `b = -G / S - mu.v`. Requires `lambda > 0`.
pub fn solve_linear_woodbury(
    x_aug: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    reg: &RegularizationSpec,
) -> Result<LeafModel> {
    woodbury(x_aug, g, h, reg).map(|(model, _)| model)
}

/// Same as [`solve_linear_woodbury`], also returning the size of the inner
/// system that was factorized (0 when the constant fallback was taken).
pub(crate) fn woodbury(
    x_aug: &[Vec<f64>],
    g: &[f64],
    h: &[f64],
    reg: &RegularizationSpec,
) -> Result<(LeafModel, usize)> {
    if !(reg.lambda > 0.0) {
        return Err(Error::invalid("the Woodbury solve requires lambda > 0"));
    }
    let stats = accumulate_linear(x_aug, g, h)?;
    let m = g.len();
    let d = stats.dim - 1;
    let lambda = reg.lambda;
    let scalar = stats.scalar();
    let s = scalar.hess_sum;
    if !(s > PIVOT_TOLERANCE * lambda) {
        return Ok((solve_constant(&scalar, reg)?, 0));
    }

    let mu: Vec<f64> = (0..d).map(|k| stats.hess[k * stats.dim + d] / s).collect();
    // z_i and r = -sum g_i (x_i - mu)
    let mut z = vec![0.0; m * d];
    let mut r = vec![0.0; d];
    for (i, x) in x_aug.iter().enumerate() {
        let sh = h[i].sqrt();
        for k in 0..d {
            let c = x[k] - mu[k];
            z[i * d + k] = sh * c;
            r[k] -= g[i] * c;
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();

    // K = lambda I_m + Z Z^T
    let mut k_mat = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let v = dot(&z[i * d..(i + 1) * d], &z[j * d..(j + 1) * d]);
            k_mat[i * m + j] = v;
            k_mat[j * m + i] = v;
        }
        k_mat[i * m + i] += lambda;
    }
    let Some(chol) = Cholesky::factor(&k_mat, m) else {
        return Ok((solve_constant(&scalar, reg)?, 0));
    };
    let zr: Vec<f64> = (0..m).map(|i| dot(&z[i * d..(i + 1) * d], &r)).collect();
    let u = chol.solve(&zr);
    let mut w = vec![0.0; d + 1];
    for k in 0..d {
        let ztu: f64 = (0..m).map(|i| z[i * d + k] * u[i]).sum();
        w[k] = (r[k] - ztu) / lambda;
    }
    w[d] = -scalar.grad_sum / s - dot(&mu, &w[..d]);
    let model = LeafModel::Linear(w);
    if !model.is_finite() {
        return Err(Error::NonFinite("Woodbury leaf weights".into()));
    }
    Ok((model, m))
}

/// A leaf's contribution to the round objective, excluding the per-leaf
/// `gamma`: `G w / 2` for a constant leaf, `g~.w / 2` for a linear one.
/// At the optimum this equals `-G^2 / (2 (H + lambda))` resp.
/// `-g~^T (Lambda + H~)^{-1} g~ / 2` and is never positive.
pub fn leaf_objective_term(model: &LeafModel, stats: &LeafStats) -> f64 {
    match (model, stats) {
        (LeafModel::Constant(w), stats) => 0.5 * stats.scalar().grad_sum * w,
        (LeafModel::Linear(w), LeafStats::Linear(s)) => {
            0.5 * s.grad.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()
        }
        (LeafModel::Linear(_), LeafStats::Scalar(_)) => {
            panic!("a linear leaf model needs linear leaf statistics")
        }
    }
}

/// Lower-triangular factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub(crate) struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails when any pivot falls below `PIVOT_TOLERANCE * max(diag)`.
    pub(crate) fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut l = a.to_vec();
        factor_in_place(&mut l, n).then_some(Self { n, l })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        forward_substitute(&self.l, self.n, &mut y);
        backward_substitute(&self.l, self.n, &mut y);
        y
    }
}

/// Overwrites the lower triangle of `a` (row-major, `n x n`) with its
/// Cholesky factor. Only the lower triangle of `a` is read.
fn factor_in_place(a: &mut [f64], n: usize) -> bool {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max);
    if !(max_diag > 0.0 && max_diag.is_finite()) {
        return false;
    }
    let tol = PIVOT_TOLERANCE * max_diag;
    for j in 0..n {
        let mut pivot = a[j * n + j];
        for k in 0..j {
            pivot -= a[j * n + k] * a[j * n + k];
        }
        if !(pivot > tol) {
            return false;
        }
        let ljj = pivot.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

fn forward_substitute(l: &[f64], n: usize, y: &mut [f64]) {
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
}

fn backward_substitute(l: &[f64], n: usize, y: &mut [f64]) {
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
}

/// Reusable buffers for [`LeafStats::objective_term`].
#[derive(Debug, Default)]
pub struct SolveScratch {
    matrix: Vec<f64>,
    rhs: Vec<f64>,
}

impl LeafStats {
    /// The optimal objective term without materializing the weights:
    /// `-|L^{-1} g~|^2 / 2` with `L L^T = Lambda + H~`, or the constant term
    /// when the factorization fails. Agrees with [`LeafStats::solve`] up to
    /// rounding.
    pub fn objective_term(&self, reg: &RegularizationSpec, scratch: &mut SolveScratch) -> Result<f64> {
        let s = match self {
            LeafStats::Scalar(s) => return constant_term(s, reg),
            LeafStats::Linear(s) => s,
        };
        let dim = s.dim;
        scratch.matrix.clear();
        scratch.matrix.extend_from_slice(&s.hess);
        // The accumulators fill the upper triangle; the factorization reads the lower.
        for i in 0..dim {
            for j in 0..i {
                scratch.matrix[i * dim + j] = scratch.matrix[j * dim + i];
            }
            if i + 1 < dim {
                scratch.matrix[i * dim + i] += reg.lambda;
            }
        }
        if !factor_in_place(&mut scratch.matrix, dim) {
            return constant_term(&s.scalar(), reg);
        }
        scratch.rhs.clear();
        scratch.rhs.extend_from_slice(&s.grad);
        forward_substitute(&scratch.matrix, dim, &mut scratch.rhs);
        let term = -0.5 * scratch.rhs.iter().map(|v| v * v).sum::<f64>();
        if !term.is_finite() {
            return Err(Error::NonFinite("linear leaf objective".into()));
        }
        Ok(term)
    }
}

fn constant_term(s: &ScalarLeafStats, reg: &RegularizationSpec) -> Result<f64> {
    let w = solve_constant(s, reg)?;
    Ok(0.5 * s.grad_sum * w.weights()[0])
}
