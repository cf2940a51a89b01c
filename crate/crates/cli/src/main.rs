//! `linboost`: generate benchmark data, train and apply boosted models, and
//! run the built-in experiments.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.
//! `LINBOOST_THREADS` caps the worker threads used by `bench`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use linboost::data::{self, Table, TargetColumn};
use linboost::eval::{self, BenchExperiment, BenchOptions, BenchReport, ExperimentConfig};
use linboost::synth::{self, GridSpec, NoiseSpec, TestFunction};
use linboost::{BoostParams, Dataset, LeafMode};

#[derive(Parser)]
#[command(name = "linboost", version, about = "Gradient boosting with constant or linear tree leaves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Fit a model and write it as JSON.
    Train(TrainArgs),
    /// Apply a saved model to a CSV file.
    Predict(PredictArgs),
    /// Run a benchmark experiment.
    Bench(BenchArgs),
    /// Per-column descriptive statistics of a CSV file.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("layout").required(true).args(["grid", "random"])))]
struct GenArgs {
    /// heavysine, jakeman1, jakeman4 or friedman1.
    #[arg(long)]
    function: TestFunction,
    /// Points per axis of a regular grid on [0, 1].
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    grid: Option<u64>,
    /// Number of uniformly random points.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    random: Option<u64>,
    /// Variance of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Target column name or 0-based index (default: last column).
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = LeafMode::Constant)]
    mode: LeafMode,
    /// Number of boosting rounds (default: 100 constant, 3 linear).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    trees: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    min_split: Option<usize>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model_out: PathBuf,
    /// The CSV file has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("what").required(true).args(["experiment", "config"])))]
struct BenchArgs {
    /// One of the built-in experiments.
    #[arg(long)]
    experiment: Option<String>,
    /// A JSON experiment description (its own runs and seed apply).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the summary table as CSV.
    #[arg(long)]
    out_report: Option<PathBuf>,
    /// Points per axis of the noise-free test grid.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    test_grid: Option<u64>,
    /// Write truth and first-run predictions on a plotting grid as CSV.
    #[arg(long)]
    plot_out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    no_header: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Bench(a) => bench(a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("LINBOOST_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("LINBOOST_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn gen(a: GenArgs) -> linboost::Result<()> {
    let noise = NoiseSpec::new(a.noise_var, a.seed)?;
    let f = |x: &[f64]| a.function.eval(x);
    let dim = a.function.dim();
    let ds = match (a.grid, a.random) {
        (Some(m), _) => synth::make_grid_dataset(&f, dim, &GridSpec::new(m as usize)?, &noise)?,
        (None, Some(n)) => synth::make_random_dataset(&f, n as usize, dim, &noise)?,
        (None, None) => unreachable!("clap enforces one of --grid/--random"),
    };
    let ds = synth::named(ds)?;
    data::write_csv(&ds, &a.out)?;
    println!("wrote {} rows to {}", ds.n_rows(), a.out.display());
    Ok(())
}

fn load_training_data(path: &Path, target: Option<&str>, has_header: bool) -> linboost::Result<Dataset> {
    let table = data::load_table(path, has_header)?;
    let target = match target {
        Some(t) => TargetColumn::from(t),
        None => TargetColumn::Index(table.n_columns.saturating_sub(1)),
    };
    table.into_dataset(&target)
}

fn train(a: TrainArgs) -> linboost::Result<()> {
    let ds = load_training_data(&a.data, a.target.as_deref(), !a.no_header)?;
    let mut p = BoostParams::defaults(a.mode, ds.n_features());
    if let Some(k) = a.trees {
        p.num_trees = k as usize;
    }
    if let Some(v) = a.lr {
        p.learning_rate = v;
    }
    if let Some(v) = a.lambda {
        p.reg.lambda = v;
    }
    if let Some(v) = a.gamma {
        p.reg.gamma = v;
    }
    if let Some(v) = a.max_depth {
        p.limits.max_depth = v;
    }
    if let Some(v) = a.min_leaf {
        p.limits.min_samples_leaf = v;
    }
    if let Some(v) = a.min_split {
        p.limits.min_samples_split = v;
    }
    if let Some(v) = a.subsample {
        p.subsample = v;
    }
    p.seed = a.seed;

    let model = linboost::fit(&ds, &p)?;
    linboost::save_model(&model, &a.model_out)?;
    let yhat = model.predict_dataset(&ds)?;
    println!("trees: {}", model.trees.len());
    println!("training NMSE: {}", eval::nmse(ds.targets(), &yhat)?);
    Ok(())
}

/// Splits a prediction table into feature rows and, when the file has one
/// more column than the model has features, the target column (the column
/// named like the model's target, or else the last one).
fn split_prediction_table(table: &Table, d: usize, target_name: Option<&str>) -> linboost::Result<(Vec<Vec<f64>>, Option<Vec<f64>>)> {
    let rows = table.cells.chunks_exact(table.n_columns.max(1));
    if table.n_columns == d {
        return Ok((rows.map(<[f64]>::to_vec).collect(), None));
    }
    if table.n_columns != d + 1 {
        return Err(linboost::Error::DimensionMismatch {
            expected: d,
            found: table.n_columns,
        });
    }
    let t = target_name
        .and_then(|name| table.column_index(&TargetColumn::Name(name.to_string())).ok())
        .unwrap_or(d);
    let mut xs = Vec::with_capacity(table.n_rows());
    let mut ys = Vec::with_capacity(table.n_rows());
    for row in rows {
        let mut x = row.to_vec();
        ys.push(x.remove(t));
        xs.push(x);
    }
    Ok((xs, Some(ys)))
}

fn predict(a: PredictArgs) -> linboost::Result<()> {
    let model = linboost::load_model(&a.model)?;
    let table = data::load_table(&a.data, !a.no_header)?;
    let (xs, ys) = split_prediction_table(&table, model.n_features(), model.target_name.as_deref())?;
    let yhat = linboost::predict(&model, &xs)?;

    let mut out = String::from("prediction\n");
    for v in &yhat {
        let _ = writeln!(out, "{v}");
    }
    data::write_atomic(&a.out, out.as_bytes())?;
    println!("wrote {} predictions to {}", yhat.len(), a.out.display());
    if let Some(ys) = ys {
        println!("NMSE: {}", eval::nmse(&ys, &yhat)?);
    }
    Ok(())
}

fn bench(a: BenchArgs) -> linboost::Result<()> {
    let (report, plot) = match (&a.experiment, &a.config) {
        (Some(name), _) => {
            let experiment: BenchExperiment = name.parse()?;
            let opts = BenchOptions {
                runs: a.runs as usize,
                seed: a.seed,
                test_grid: a.test_grid.map(|m| m as usize),
            };
            BenchReport::run(experiment, &opts, a.plot_out.is_some())?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| linboost::Error::Io {
                path: path.clone(),
                source,
            })?;
            let config: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| linboost::Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            let name = config.name.clone();
            let report = eval::run_experiment(&config)?;
            (
                BenchReport {
                    experiment: name,
                    methods: vec![report],
                },
                None,
            )
        }
        (None, None) => unreachable!("clap enforces one of --experiment/--config"),
    };
    print!("{}", report.to_text());
    if let Some(path) = &a.out_report {
        data::write_atomic(path, report.to_csv().as_bytes())?;
    }
    if let (Some(path), Some(plot)) = (&a.plot_out, plot) {
        data::write_atomic(path, plot.to_csv().as_bytes())?;
    }
    Ok(())
}

fn summarize(a: SummarizeArgs) -> linboost::Result<()> {
    let table = data::load_table(&a.data, !a.no_header)?;
    print!("{}", data::render_summary(&data::summarize(&table)));
    Ok(())
}
