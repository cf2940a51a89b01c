//! Synthetic benchmark functions and samplers.
//!
//! Randomness: ChaCha8 streams (see [`crate::rng`]); Gaussian draws use the
//! ziggurat sampler of `rand_distr::Normal`. Covariates and noise come from
//! separate streams derived from the same seed, so a noisy and a noise-free
//! dataset drawn with one seed share their inputs.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

const FEATURE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

/// `sign` with `sign(0) = 0`.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `4 sin(4 pi t) - sign(t - 0.3) - sign(0.72 - t)`: a period-1/2 sinusoid
/// with jumps at 0.3 and 0.72.
pub fn heavysine(t: f64) -> f64 {
    4.0 * (4.0 * PI * t).sin() - sign(t - 0.3) - sign(0.72 - t)
}

/// `1 / (|0.3 - x1^2 - x2^2| + 0.1)`, discontinuous in its derivative on
/// the circle `x1^2 + x2^2 = 0.3`, with range `(0, 10]`.
pub fn jakeman1(x1: f64, x2: f64) -> f64 {
    1.0 / ((0.3 - x1 * x1 - x2 * x2).abs() + 0.1)
}

/// `exp(0.5 x1 + 3 x2)` on `[0, 0.5]^2` (boundary included), 0 elsewhere.
pub fn jakeman4(x1: f64, x2: f64) -> f64 {
    if x1 > 0.5 || x2 > 0.5 {
        0.0
    } else {
        (0.5 * x1 + 3.0 * x2).exp()
    }
}

/// Noise-free `10 sin(pi x1 x2) + 20 (x3 - 0.5)^2 + 10 x4 + 5 x5`;
/// components beyond the fifth are ignored.
pub fn friedman1(x: &[f64]) -> Result<f64> {
    if x.len() < 5 {
        return Err(Error::DimensionMismatch {
            expected: 5,
            found: x.len(),
        });
    }
    Ok(10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4])
}

/// The named benchmark functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    HeavySine,
    Jakeman1,
    Jakeman4,
    Friedman1,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [
        TestFunction::HeavySine,
        TestFunction::Jakeman1,
        TestFunction::Jakeman4,
        TestFunction::Friedman1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::HeavySine => "heavysine",
            TestFunction::Jakeman1 => "jakeman1",
            TestFunction::Jakeman4 => "jakeman4",
            TestFunction::Friedman1 => "friedman1",
        }
    }

    /// Input dimension used when sampling.
    pub fn dim(self) -> usize {
        match self {
            TestFunction::HeavySine => 1,
            TestFunction::Jakeman1 | TestFunction::Jakeman4 => 2,
            TestFunction::Friedman1 => 10,
        }
    }

    /// Evaluates the function; `x` must have length [`dim`](Self::dim).
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::HeavySine => heavysine(x[0]),
            TestFunction::Jakeman1 => jakeman1(x[0], x[1]),
            TestFunction::Jakeman4 => jakeman4(x[0], x[1]),
            TestFunction::Friedman1 => friedman1(x).expect("friedman1 needs at least five inputs"),
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TestFunction::ALL.iter().map(|f| f.name()).collect();
                Error::invalid(format!("unknown function {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Additive i.i.d. Gaussian noise `N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { variance: 0.0, seed: 0 }
    }

    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance.is_finite() && variance >= 0.0) {
            return Err(Error::invalid(format!("noise variance {variance} must be finite and >= 0")));
        }
        Ok(Self { variance, seed })
    }

    /// Adds noise in place; a no-op for zero variance.
    pub fn apply(&self, targets: &mut [f64]) -> Result<()> {
        if self.variance == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, self.variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = rng::seeded(rng::derive_seed(self.seed, NOISE_STREAM));
        for t in targets {
            *t += normal.sample(&mut rng);
        }
        Ok(())
    }
}

/// `m` equally spaced points per axis covering `[0, 1]` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(points_per_axis: usize) -> Result<Self> {
        if points_per_axis < 2 {
            return Err(Error::invalid("a grid needs at least 2 points per axis"));
        }
        Ok(Self { points_per_axis })
    }

    pub fn axis(&self) -> Vec<f64> {
        let last = (self.points_per_axis - 1) as f64;
        (0..self.points_per_axis).map(|i| i as f64 / last).collect()
    }
}

/// All `m^dim` grid points in row-major axis order (first axis slowest).
pub fn grid_points(grid: &GridSpec, dim: usize) -> Vec<Vec<f64>> {
    let axis = grid.axis();
    let m = axis.len();
    let total = m.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; dim];
            for k in (0..dim).rev() {
                p[k] = axis[idx % m];
                idx /= m;
            }
            p
        })
        .collect()
}

/// Gridded dataset: targets `f(x) + N(0, variance)`.
pub fn make_grid_dataset(f: &dyn Fn(&[f64]) -> f64, dim: usize, grid: &GridSpec, noise: &NoiseSpec) -> Result<Dataset> {
    if grid.points_per_axis < 2 {
        return Err(Error::invalid("a grid needs at least 2 points per axis"));
    }
    let points = grid_points(grid, dim);
    let mut targets: Vec<f64> = points.iter().map(|p| f(p)).collect();
    noise.apply(&mut targets)?;
    Dataset::from_rows(&points, targets)
}

/// `n` rows drawn i.i.d. uniformly from the open cube `(0, 1)^dim`.
pub fn make_random_dataset(
    f: &dyn Fn(&[f64]) -> f64,
    n: usize,
    dim: usize,
    noise: &NoiseSpec,
) -> Result<Dataset> {
    if n == 0 || dim == 0 {
        return Err(Error::Empty("random dataset needs n >= 1 and dim >= 1".into()));
    }
    let mut rng = rng::seeded(rng::derive_seed(noise.seed, FEATURE_STREAM));
    let features: Vec<f64> = (0..n * dim).map(|_| rng.sample::<f64, _>(Open01)).collect();
    let mut targets: Vec<f64> = features.chunks_exact(dim).map(f).collect();
    noise.apply(&mut targets)?;
    Dataset::new(features, dim, targets)
}

/// Names `x1..xd`, `y`.
pub fn named(ds: Dataset) -> Result<Dataset> {
    let names = (1..=ds.n_features()).map(|k| format!("x{k}")).collect();
    ds.with_names(names, "y")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heavysine_values() {
        assert_eq!(heavysine(0.0), 0.0);
        assert!((heavysine(0.5) + 2.0).abs() < 1e-14);
        let below = heavysine(0.3 - 1e-9);
        let above = heavysine(0.3 + 1e-9);
        assert!((below - above - 2.0).abs() < 1e-6);
        let below = heavysine(0.72 - 1e-9);
        let above = heavysine(0.72 + 1e-9);
        assert!((above - below - 2.0).abs() < 1e-6);
    }

    #[test]
    fn jakeman_values() {
        assert!((jakeman1(0.0, 0.0) - 2.5).abs() < 1e-15);
        let r = 0.3f64.sqrt();
        assert!((jakeman1(r, 0.0) - 10.0).abs() < 1e-9);
        assert!((jakeman1(1.0, 1.0) - 1.0 / 1.8).abs() < 1e-15);
        assert_eq!(jakeman4(0.6, 0.2), 0.0);
        assert_eq!(jakeman4(0.2, 0.6), 0.0);
        assert_eq!(jakeman4(0.0, 0.0), 1.0);
        assert!((jakeman4(0.5, 0.5) - 1.75f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn friedman_values() {
        assert!((friedman1(&[0.0; 10]).unwrap() - 5.0).abs() < 1e-14);
        assert!(friedman1(&[0.0, 0.0, 0.5, 0.0, 0.0]).unwrap().abs() < 1e-14);
        let x = [1.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!((friedman1(&x).unwrap() - 10.0).abs() < 1e-14);
        assert!(friedman1(&[0.0; 4]).is_err());
    }

    #[test]
    fn grid_corners_in_row_major_order() {
        let f = |x: &[f64]| jakeman4(x[0], x[1]);
        let ds = make_grid_dataset(&f, 2, &GridSpec::new(2).unwrap(), &NoiseSpec::none()).unwrap();
        assert_eq!(ds.targets(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(ds.row(1), &[0.0, 1.0]);
        assert_eq!(ds.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn grid_shape_and_determinism() {
        let f = |x: &[f64]| jakeman1(x[0], x[1]);
        let noise = NoiseSpec::new(0.05, 9).unwrap();
        let a = make_grid_dataset(&f, 2, &GridSpec::new(11).unwrap(), &noise).unwrap();
        assert_eq!(a.n_rows(), 121);
        assert!((a.row(1)[1] - 0.1).abs() < 1e-15);
        let b = make_grid_dataset(&f, 2, &GridSpec::new(11).unwrap(), &noise).unwrap();
        assert_eq!(a, b);
        let means = crate::data::fit_centering(&a).means;
        assert!(means.iter().all(|m| (m - 0.5).abs() < 1e-14));
        assert!(GridSpec::new(1).is_err());
    }

    #[test]
    fn random_dataset_support_and_seeds() {
        let f = |x: &[f64]| friedman1(x).unwrap();
        let a = make_random_dataset(&f, 5, 10, &NoiseSpec::new(0.0, 1).unwrap()).unwrap();
        for (row, y) in a.rows().zip(a.targets()) {
            assert!(row.iter().all(|v| *v > 0.0 && *v < 1.0));
            assert_eq!(*y, friedman1(row).unwrap());
        }
        let b = make_random_dataset(&f, 5, 10, &NoiseSpec::new(0.0, 2).unwrap()).unwrap();
        assert_ne!(a.features(), b.features());
        let noisy = make_random_dataset(&f, 5, 10, &NoiseSpec::new(1.0, 1).unwrap()).unwrap();
        assert_eq!(noisy.features(), a.features());
        assert_ne!(noisy.targets(), a.targets());
    }

    #[test]
    fn function_names_round_trip() {
        for f in TestFunction::ALL {
            assert_eq!(f.name().parse::<TestFunction>().unwrap(), f);
        }
        let err = "sine".parse::<TestFunction>().unwrap_err().to_string();
        assert!(err.contains("jakeman4"));
    }
}
