//! Datasets, CSV ingestion, feature centering and row-index bookkeeping.
//!
//! CSV dialect: comma separated, `.` decimal point, an optional single header
//! line. Every cell must parse as a finite real; missing values are rejected.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// `n` samples of `d` real features plus one real target per sample.
///
/// Features are stored row-major; row `i` is the sample `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    targets: Vec<f64>,
    feature_names: Option<Vec<String>>,
    target_name: Option<String>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, n_features: usize, targets: Vec<f64>) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::Empty("dataset has no feature columns".into()));
        }
        if targets.is_empty() {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if features.len() != targets.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * n_features,
                found: features.len(),
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        if let Some(pos) = targets.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("target at row {pos}")));
        }
        Ok(Self {
            features,
            n_features,
            targets,
            feature_names: None,
            target_name: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::RaggedRow {
                row: i,
                expected: d,
                found: r.len(),
            });
        }
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: targets.len(),
            });
        }
        Self::new(rows.concat(), d, targets)
    }

    pub fn with_names(mut self, feature_names: Vec<String>, target_name: impl Into<String>) -> Result<Self> {
        if feature_names.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: feature_names.len(),
            });
        }
        self.feature_names = Some(feature_names);
        self.target_name = Some(target_name.into());
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn feature(&self, i: usize, k: usize) -> f64 {
        self.features[i * self.n_features + k]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn target_name(&self) -> Option<&str> {
        self.target_name.as_deref()
    }

    /// Column names, falling back to `x1..xd` and `y`.
    pub fn column_names(&self) -> (Vec<String>, String) {
        let features = self
            .feature_names
            .clone()
            .unwrap_or_else(|| (1..=self.n_features).map(|k| format!("x{k}")).collect());
        let target = self.target_name.clone().unwrap_or_else(|| "y".to_string());
        (features, target)
    }

    /// Copies the given rows, in index order, into a new dataset.
    pub fn select(&self, rows: &SampleIndexSet) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.n_features);
        let mut targets = Vec::with_capacity(rows.len());
        for &i in rows.indices() {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset {
            features,
            n_features: self.n_features,
            targets,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    pub(crate) fn with_features(&self, features: Vec<f64>) -> Dataset {
        debug_assert_eq!(features.len(), self.features.len());
        Dataset {
            features,
            ..self.clone()
        }
    }
}

/// Which column of a CSV file holds the regression target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for TargetColumn {
    /// A purely numeric string is an index, anything else a column name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        }
    }
}

/// A parsed numeric CSV file before a target column has been chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub n_columns: usize,
    /// Row-major cells.
    pub cells: Vec<f64>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.cells.len().checked_div(self.n_columns).unwrap_or(0)
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().skip(k).step_by(self.n_columns).copied()
    }

    pub fn column_index(&self, target: &TargetColumn) -> Result<usize> {
        match target {
            TargetColumn::Index(i) if *i < self.n_columns => Ok(*i),
            TargetColumn::Index(i) => Err(Error::MissingTarget(format!(
                "index {i} (file has {} columns)",
                self.n_columns
            ))),
            TargetColumn::Name(name) => self
                .header
                .as_ref()
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| Error::MissingTarget(format!("{name:?}"))),
        }
    }

    /// Splits off the target column; remaining columns keep their order.
    pub fn into_dataset(self, target: &TargetColumn) -> Result<Dataset> {
        let t = self.column_index(target)?;
        if self.n_columns < 2 {
            return Err(Error::Empty("no feature columns besides the target".into()));
        }
        let d = self.n_columns - 1;
        let n = self.n_rows();
        let mut features = Vec::with_capacity(n * d);
        let mut targets = Vec::with_capacity(n);
        for row in self.cells.chunks_exact(self.n_columns) {
            for (k, &v) in row.iter().enumerate() {
                if k == t {
                    targets.push(v);
                } else {
                    features.push(v);
                }
            }
        }
        let ds = Dataset::new(features, d, targets)?;
        match self.header {
            Some(mut names) => {
                let target_name = names.remove(t);
                ds.with_names(names, target_name)
            }
            None => Ok(ds),
        }
    }
}

/// Reads a numeric CSV file without interpreting any column as the target.
///
/// Errors report 1-based file line and column numbers.
pub fn load_table(path: impl AsRef<Path>, has_header: bool) -> Result<Table> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut header = None;
    let mut n_columns = None;
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if has_header && header.is_none() {
            n_columns = Some(record.len());
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let expected = *n_columns.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row: line,
                expected,
                found: record.len(),
            });
        }
        for (k, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => cells.push(v),
                _ => {
                    return Err(Error::NonNumericCell {
                        row: line,
                        column: k + 1,
                        value: cell.to_string(),
                    })
                }
            }
        }
    }
    let n_columns = n_columns.unwrap_or(0);
    if cells.is_empty() {
        return Err(Error::Empty(format!("{} contains no data rows", path.display())));
    }
    Ok(Table {
        header,
        n_columns,
        cells,
    })
}

pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, has_header: bool) -> Result<Dataset> {
    load_table(path, has_header)?.into_dataset(target)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Serializes the dataset as CSV: feature columns, then the target column.
///
/// Values are written in Rust's shortest round-trip form so that reading the
/// file back reproduces them bit for bit.
pub fn to_csv_string(ds: &Dataset) -> String {
    let (features, target) = ds.column_names();
    let mut out = String::new();
    out.push_str(&features.join(","));
    out.push(',');
    out.push_str(&target);
    out.push('\n');
    for (row, y) in ds.rows().zip(ds.targets()) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, to_csv_string(ds).as_bytes())
}

/// Per-feature training means; subtracting them yields zero-mean features.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CenteringTransform {
    pub means: Vec<f64>,
}

pub fn fit_centering(ds: &Dataset) -> CenteringTransform {
    let d = ds.n_features();
    let n = ds.n_rows() as f64;
    let mut sums = vec![0.0; d];
    for row in ds.rows() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let mut means: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    // One correction pass absorbs the rounding left by the first summation.
    let mut resid = vec![0.0; d];
    for row in ds.rows() {
        for ((r, v), m) in resid.iter_mut().zip(row).zip(&means) {
            *r += v - m;
        }
    }
    for (m, r) in means.iter_mut().zip(resid) {
        *m += r / n;
    }
    CenteringTransform { means }
}

impl CenteringTransform {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        for ((o, v), m) in out.iter_mut().zip(x).zip(&self.means) {
            *o = v - m;
        }
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_features() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: ds.n_features(),
            });
        }
        let mut features = ds.features().to_vec();
        for row in features.chunks_exact_mut(self.dim()) {
            for (v, m) in row.iter_mut().zip(&self.means) {
                *v -= m;
            }
        }
        Ok(ds.with_features(features))
    }

    pub fn invert(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.n_features() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: ds.n_features(),
            });
        }
        let mut features = ds.features().to_vec();
        for row in features.chunks_exact_mut(self.dim()) {
            for (v, m) in row.iter_mut().zip(&self.means) {
                *v += m;
            }
        }
        Ok(ds.with_features(features))
    }
}

/// Appends the constant 1 that carries the bias of a linear leaf model.
pub fn augment(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(x);
    out.push(1.0);
    out
}

/// Sorted, duplicate-free row indices into a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleIndexSet {
    indices: Vec<usize>,
}

impl SampleIndexSet {
    /// Sorts and validates `indices` against a dataset of `n` rows.
    pub fn new(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate row index"));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::invalid(format!("row index {last} out of range for {n} rows")));
            }
        }
        Ok(Self { indices })
    }

    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices of `0..n` not in this set.
    pub fn complement(&self, n: usize) -> Self {
        let mut keep = vec![true; n];
        for &i in &self.indices {
            keep[i] = false;
        }
        Self {
            indices: (0..n).filter(|&i| keep[i]).collect(),
        }
    }
}

/// Number of rows kept by a subsampling fraction: `ceil(fraction * n)`.
///
/// A small slack absorbs products such as `0.3 * 10 = 3.0000000000000004`.
pub fn subsample_size(n: usize, fraction: f64) -> usize {
    let raw = fraction * n as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).clamp(usize::from(n > 0), n)
}

/// Draws `ceil(fraction * n)` distinct rows uniformly without replacement.
pub fn subsample(n: usize, fraction: f64, seed: u64) -> Result<SampleIndexSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("subsample fraction {fraction} not in (0, 1]")));
    }
    if fraction == 1.0 {
        return Ok(SampleIndexSet::all(n));
    }
    let k = subsample_size(n, fraction);
    let mut rng = rng::seeded(seed);
    let mut indices = index::sample(&mut rng, n, k).into_vec();
    indices.sort_unstable();
    Ok(SampleIndexSet { indices })
}

/// Per-column descriptive statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (divides by `count - 1`).
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics at position
/// `p * (n - 1)`. `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn summarize(table: &Table) -> Vec<ColumnSummary> {
    (0..table.n_columns)
        .map(|k| {
            let mut values: Vec<f64> = table.column(k).collect();
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                f64::NAN
            };
            let name = table
                .header
                .as_ref()
                .map_or_else(|| format!("col{}", k + 1), |h| h[k].clone());
            ColumnSummary {
                name,
                count: n,
                mean,
                std: var.sqrt(),
                min: values[0],
                q1: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q3: quantile(&values, 0.75),
                max: values[n - 1],
            }
        })
        .collect()
}

/// Renders summaries with one row per statistic and one column per variable.
pub fn render_summary(summaries: &[ColumnSummary]) -> String {
    let rows: [(&str, fn(&ColumnSummary) -> f64); 8] = [
        ("count", |s| s.count as f64),
        ("mean", |s| s.mean),
        ("std", |s| s.std),
        ("min", |s| s.min),
        ("25%", |s| s.q1),
        ("50%", |s| s.median),
        ("75%", |s| s.q3),
        ("max", |s| s.max),
    ];
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|(_, f)| summaries.iter().map(|s| format!("{:.6}", f(s))).collect())
        .collect();
    let widths: Vec<usize> = summaries
        .iter()
        .enumerate()
        .map(|(k, s)| cells.iter().map(|r| r[k].len()).chain([s.name.len()]).max().unwrap_or(0))
        .collect();
    let mut out = format!("{:<6}", "");
    for (s, w) in summaries.iter().zip(&widths) {
        let _ = write!(out, "  {:>w$}", s.name, w = w);
    }
    out.push('\n');
    for ((label, _), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{label:<6}");
        for (c, w) in row.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}", w = w);
        }
        out.push('\n');
    }
    out
}
