//! Gradient-boosted regression trees whose leaves hold either a constant
//! score or a regularized linear model on the (centered) input features.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: datasets, CSV ingestion, feature centering, subsampling.
//! - [`leafsolve`]: per-leaf gradient/Hessian aggregates and optimal weights.
//! - [`tree`]: exact greedy growth of one tree and the two pruning strategies.
//! - [`boosting`]: the additive ensemble, prediction and model files.
//! - [`synth`]: deterministic synthetic benchmark functions and samplers.
//! - [`eval`]: NMSE, k-fold cross-validation, grid search and experiments.

pub mod boosting;
pub mod data;
pub mod error;
pub mod eval;
pub mod leafsolve;
pub mod rng;
pub mod synth;
pub mod tree;

pub use boosting::{fit, load_model, predict, save_model, BoostParams, Ensemble, LossFunction, SquareLoss};
pub use data::{CenteringTransform, Dataset, SampleIndexSet};
pub use error::{Error, Result};
pub use leafsolve::{LeafModel, RegularizationSpec};
pub use tree::{GrowthLimits, LeafMode, TreeNode};
