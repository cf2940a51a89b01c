use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{grid_search, nmse, ParamGrid};
use crate::boosting::{self, BoostParams, Ensemble};
use crate::data::{self, Dataset, SampleIndexSet, TargetColumn};
use crate::error::{Error, Result};
use crate::rng;
use crate::synth::{self, GridSpec, NoiseSpec, TestFunction};

/// How generator inputs are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// `m` points per axis on `[0, 1]`.
    Grid(usize),
    /// `n` i.i.d. uniform points in `(0, 1)^d`.
    Random(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Generator {
        function: TestFunction,
        sampling: Sampling,
        noise_variance: f64,
    },
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default = "yes")]
        has_header: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSource {
    /// A freshly generated set from the source's function.
    Generated { sampling: Sampling, noise_variance: f64 },
    /// A random fraction of the source rows is held out each run.
    Holdout { fraction: f64 },
}

/// A repeated train/tune/test experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub source: DataSource,
    pub test: TestSource,
    pub grid: ParamGrid,
    pub folds: usize,
    pub runs: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::invalid("an experiment needs at least one run"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("cross-validation needs at least 2 folds"));
        }
        if let TestSource::Holdout { fraction } = self.test {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::invalid(format!("holdout fraction {fraction} not in (0, 1)")));
            }
        }
        if let (DataSource::Csv { .. }, TestSource::Generated { .. }) = (&self.source, &self.test) {
            return Err(Error::invalid("a generated test set needs a generator source"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub nmse: f64,
    pub params: BoostParams,
    /// Trees actually kept (pruning can end training early).
    pub trees: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub runs: Vec<RunResult>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std: f64,
}

impl ExperimentReport {
    pub fn from_runs(name: impl Into<String>, runs: Vec<RunResult>) -> Self {
        let values: Vec<f64> = runs.iter().map(|r| r.nmse).collect();
        let (mean, std) = mean_std(&values);
        Self {
            name: name.into(),
            runs,
            mean,
            std,
        }
    }
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn generate(function: TestFunction, sampling: Sampling, noise_variance: f64, seed: u64) -> Result<Dataset> {
    let noise = NoiseSpec::new(noise_variance, seed)?;
    let f = |x: &[f64]| function.eval(x);
    match sampling {
        Sampling::Grid(m) => synth::make_grid_dataset(&f, function.dim(), &GridSpec::new(m)?, &noise),
        Sampling::Random(n) => synth::make_random_dataset(&f, n, function.dim(), &noise),
    }
}

fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(SampleIndexSet, SampleIndexSet)> {
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(2));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let test = SampleIndexSet::new(order[..n_test].to_vec(), n)?;
    let train = test.complement(n);
    Ok((train, test))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, &mut |_, _, _| {})
}

/// As [`run_experiment`], handing each run's refitted model and test set to
/// `on_run`.
///
/// Run `r` uses the seed `derive_seed(config.seed, r)`, from which the
/// training noise, test draw, fold assignment and subsampling streams are
/// derived.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    on_run: &mut dyn FnMut(&RunResult, &Ensemble, &Dataset),
) -> Result<ExperimentReport> {
    config.validate()?;
    let loaded = match &config.source {
        DataSource::Csv {
            path,
            target,
            has_header,
        } => Some(data::load_csv(path, &TargetColumn::from(target.as_str()), *has_header)?),
        DataSource::Generator { .. } => None,
    };
    // a noise-free generated test set is the same in every run
    let mut shared_test: Option<Dataset> = None;

    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let seed = rng::derive_seed(config.seed, run as u64);
        let (train, test) = match (&config.source, &config.test) {
            (
                DataSource::Generator {
                    function,
                    sampling,
                    noise_variance,
                },
                TestSource::Generated {
                    sampling: test_sampling,
                    noise_variance: test_noise,
                },
            ) => {
                let train = generate(*function, *sampling, *noise_variance, rng::derive_seed(seed, 1))?;
                let fixed = *test_noise == 0.0 && matches!(test_sampling, Sampling::Grid(_));
                let test = match (&shared_test, fixed) {
                    (Some(t), true) => t.clone(),
                    _ => {
                        let t = generate(*function, *test_sampling, *test_noise, rng::derive_seed(seed, 2))?;
                        if fixed {
                            shared_test = Some(t.clone());
                        }
                        t
                    }
                };
                (train, test)
            }
            (
                DataSource::Generator {
                    function,
                    sampling,
                    noise_variance,
                },
                TestSource::Holdout { fraction },
            ) => {
                let all = generate(*function, *sampling, *noise_variance, rng::derive_seed(seed, 1))?;
                let (tr, te) = holdout_split(all.n_rows(), *fraction, rng::derive_seed(seed, 2))?;
                (all.select(&tr), all.select(&te))
            }
            (DataSource::Csv { .. }, TestSource::Holdout { fraction }) => {
                let all = loaded.as_ref().expect("csv source is loaded up front");
                let (tr, te) = holdout_split(all.n_rows(), *fraction, rng::derive_seed(seed, 2))?;
                (all.select(&tr), all.select(&te))
            }
            (DataSource::Csv { .. }, TestSource::Generated { .. }) => unreachable!("rejected by validate"),
        };

        let mut params = grid_search(&train, &config.grid, config.folds, rng::derive_seed(seed, 3))?;
        params.seed = rng::derive_seed(seed, 4);
        let model = boosting::fit(&train, &params)?;
        let yhat = model.predict_dataset(&test)?;
        let result = RunResult {
            run,
            seed,
            nmse: nmse(test.targets(), &yhat)?,
            params,
            trees: model.trees.len(),
        };
        on_run(&result, &model, &test);
        runs.push(result);
    }
    Ok(ExperimentReport::from_runs(config.name.clone(), runs))
}
