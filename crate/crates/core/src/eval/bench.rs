//! The built-in benchmark experiments.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment_with, DataSource, ExperimentConfig, ExperimentReport, Sampling, TestSource};
use super::ParamGrid;
use crate::boosting::Ensemble;
use crate::error::{Error, Result};
use crate::synth::{self, GridSpec, TestFunction};
use crate::tree::LeafMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BenchExperiment {
    Jakeman1Small,
    Jakeman1Medium,
    Jakeman4Small,
    Jakeman4Medium,
    Jakeman4Random,
    Friedman1,
    HeavySine,
}

impl BenchExperiment {
    pub const ALL: [BenchExperiment; 7] = [
        BenchExperiment::Jakeman1Small,
        BenchExperiment::Jakeman1Medium,
        BenchExperiment::Jakeman4Small,
        BenchExperiment::Jakeman4Medium,
        BenchExperiment::Jakeman4Random,
        BenchExperiment::Friedman1,
        BenchExperiment::HeavySine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchExperiment::Jakeman1Small => "jakeman1-11",
            BenchExperiment::Jakeman1Medium => "jakeman1-41",
            BenchExperiment::Jakeman4Small => "jakeman4-11",
            BenchExperiment::Jakeman4Medium => "jakeman4-41",
            BenchExperiment::Jakeman4Random => "jakeman4-random",
            BenchExperiment::Friedman1 => "friedman1",
            BenchExperiment::HeavySine => "heavysine",
        }
    }

    fn function(self) -> TestFunction {
        match self {
            BenchExperiment::Jakeman1Small | BenchExperiment::Jakeman1Medium => TestFunction::Jakeman1,
            BenchExperiment::Jakeman4Small | BenchExperiment::Jakeman4Medium | BenchExperiment::Jakeman4Random => {
                TestFunction::Jakeman4
            }
            BenchExperiment::Friedman1 => TestFunction::Friedman1,
            BenchExperiment::HeavySine => TestFunction::HeavySine,
        }
    }

    /// The constant-leaf and linear-leaf experiment definitions.
    pub fn configs(self, opts: &BenchOptions) -> Vec<ExperimentConfig> {
        let function = self.function();
        let test_grid = |default: usize| TestSource::Generated {
            sampling: Sampling::Grid(opts.test_grid.unwrap_or(default)),
            noise_variance: 0.0,
        };
        let (sampling, noise_variance, test, folds) = match self {
            BenchExperiment::Jakeman1Small | BenchExperiment::Jakeman4Small => {
                (Sampling::Grid(11), 0.05, test_grid(1001), 10)
            }
            BenchExperiment::Jakeman1Medium | BenchExperiment::Jakeman4Medium => {
                (Sampling::Grid(41), 0.05, test_grid(1001), 10)
            }
            BenchExperiment::Jakeman4Random => (Sampling::Random(41 * 41), 0.05, test_grid(1001), 10),
            BenchExperiment::Friedman1 => (
                Sampling::Random(200),
                1.0,
                TestSource::Generated {
                    sampling: Sampling::Random(40568),
                    noise_variance: 1.0,
                },
                10,
            ),
            BenchExperiment::HeavySine => (Sampling::Grid(201), 0.05, test_grid(2001), 10),
        };
        [LeafMode::Constant, LeafMode::Linear]
            .into_iter()
            .map(|mode| ExperimentConfig {
                name: mode.to_string(),
                source: DataSource::Generator {
                    function,
                    sampling,
                    noise_variance,
                },
                test: test.clone(),
                grid: self.grid(mode),
                folds,
                runs: opts.runs,
                seed: opts.seed,
            })
            .collect()
    }

    fn grid(self, mode: LeafMode) -> ParamGrid {
        let mut g = ParamGrid::for_mode(mode);
        match (self, mode) {
            (BenchExperiment::HeavySine, _) => {
                g.num_trees = vec![1];
                g.learning_rate = vec![1.0];
                g.lambda = vec![0.0];
                g.gamma = vec![3.0];
                g.max_depth = vec![30];
            }
            (BenchExperiment::Jakeman1Small | BenchExperiment::Jakeman1Medium, LeafMode::Linear) => {
                g.num_trees = vec![5];
                g.learning_rate = vec![0.5, 0.7];
                g.lambda = vec![0.0];
                g.gamma = vec![0.3, 1.0, 3.0];
                g.min_samples_leaf = vec![3, 6];
            }
            (BenchExperiment::Jakeman4Small | BenchExperiment::Jakeman4Medium, LeafMode::Linear) => {
                g.num_trees = vec![3];
                g.learning_rate = vec![0.5, 0.8];
                g.lambda = vec![0.0];
                g.gamma = vec![1.0, 3.0];
                g.min_samples_leaf = vec![3, 6];
            }
            (BenchExperiment::Jakeman4Random, LeafMode::Linear) => {
                g.num_trees = vec![5];
                g.learning_rate = vec![0.5, 0.8];
                g.lambda = vec![0.0];
                g.gamma = vec![1.0, 3.0];
                g.min_samples_leaf = vec![3, 10];
            }
            (BenchExperiment::Friedman1, LeafMode::Linear) => {
                g.num_trees = vec![2, 3];
                g.learning_rate = vec![0.7, 0.8];
                g.lambda = vec![0.0];
                g.gamma = vec![1.0];
                g.min_samples_leaf = vec![45, 55];
            }
            (BenchExperiment::Friedman1, LeafMode::Constant) => {
                g.num_trees = (2..=8).map(|k| 50 * k).collect();
                g.learning_rate = vec![0.1];
                g.lambda = vec![0.0];
                g.gamma = vec![0.0];
                g.max_depth = vec![2, 3];
                g.min_samples_leaf = vec![5];
                g.subsample = vec![0.6];
            }
            (_, LeafMode::Constant) => {
                g.num_trees = (1..=5).map(|k| 50 * k).collect();
                g.learning_rate = vec![0.1];
                g.lambda = vec![0.0];
                g.gamma = vec![0.0];
                g.max_depth = vec![5, 7];
                g.subsample = vec![0.7];
            }
        }
        g
    }

    /// Resolution of the grid on which [`PlotData`] is evaluated.
    fn plot_grid(self) -> GridSpec {
        let m = if self.function().dim() == 1 { 2001 } else { 101 };
        GridSpec { points_per_axis: m }
    }
}

impl std::fmt::Display for BenchExperiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BenchExperiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchExperiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = BenchExperiment::ALL.iter().map(|e| e.name()).collect();
            Error::invalid(format!("unknown experiment {s:?}; valid names: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub runs: usize,
    pub seed: u64,
    /// Points per axis of the noise-free test grid, overriding the default.
    pub test_grid: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            runs: 20,
            seed: 0,
            test_grid: None,
        }
    }
}

/// Truth and first-run predictions of each method on a regular grid, for
/// external plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub dim: usize,
    pub methods: Vec<String>,
    /// `inputs ++ [truth] ++ one prediction per method`.
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("x{k}")).collect();
        header.push("truth".into());
        header.extend(self.methods.iter().cloned());
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(f64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub experiment: String,
    pub methods: Vec<ExperimentReport>,
}

impl BenchReport {
    /// Runs both methods of `experiment`; with `plot`, also evaluates the
    /// first run's models on a plotting grid.
    pub fn run(experiment: BenchExperiment, opts: &BenchOptions, plot: bool) -> Result<(Self, Option<PlotData>)> {
        let function = experiment.function();
        let points = if plot {
            synth::grid_points(&experiment.plot_grid(), function.dim())
        } else {
            Vec::new()
        };
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut methods = Vec::new();
        for config in experiment.configs(opts) {
            let mut first: Option<Ensemble> = None;
            let report = run_experiment_with(&config, &mut |r, model, _| {
                if r.run == 0 {
                    first = Some(model.clone());
                }
            })?;
            if plot {
                let model = first.expect("at least one run");
                columns.push(crate::boosting::predict(&model, &points)?);
            }
            methods.push(report);
        }
        let plot_data = plot.then(|| PlotData {
            dim: function.dim(),
            methods: methods.iter().map(|m| m.name.clone()).collect(),
            rows: points
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut row = p.clone();
                    row.push(function.eval(p));
                    row.extend(columns.iter().map(|c| c[i]));
                    row
                })
                .collect(),
        });
        Ok((
            Self {
                experiment: experiment.name().to_string(),
                methods,
            },
            plot_data,
        ))
    }

    /// `method,mean_nmse,std,runs` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,mean_nmse,std,runs\n");
        for m in &self.methods {
            let _ = writeln!(out, "{},{},{},{}", m.name, m.mean, m.std, m.runs.len());
        }
        out
    }

    /// Aligned table followed by the per-run details.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment: {}", self.experiment);
        let _ = writeln!(out, "{:<10} {:>12} {:>12}", "method", "mean NMSE", "std");
        for m in &self.methods {
            let _ = writeln!(out, "{:<10} {:>12.6} {:>12.6}", m.name, m.mean, m.std);
        }
        for m in &self.methods {
            let _ = writeln!(out, "\n{} runs:", m.name);
            let _ = writeln!(
                out,
                "{:>4} {:>12} {:>6} {:>6} {:>8} {:>8} {:>6} {:>6} {:>5}",
                "run", "NMSE", "trees", "kept", "lr", "lambda", "gamma", "depth", "leaf"
            );
            for r in &m.runs {
                let p = &r.params;
                let _ = writeln!(
                    out,
                    "{:>4} {:>12.6} {:>6} {:>6} {:>8} {:>8} {:>6} {:>6} {:>5}",
                    r.run, r.nmse, p.num_trees, r.trees, p.learning_rate, p.reg.lambda, p.reg.gamma, p.limits.max_depth, p.limits.min_samples_leaf
                );
            }
        }
        out
    }
}
