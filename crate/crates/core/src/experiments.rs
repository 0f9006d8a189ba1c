//! Dataset ingestion and the two ensemble protocols evaluated on real data:
//! three heterogeneous experts trained on one dataset, and one expert kind
//! trained on bootstrap resamples. Each instance's ensemble loss is compared
//! with the decomposition, weighted-loss and boosting approximations through
//! the relative error `|1 − l_x / l|`, aggregated by median.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{GadError, Result};
use crate::experts::{bag_sample, train, ExpertKind, LinearExpert, TrainConfig};
use crate::gad::{decompose_with_held_out, relative_error, EnsembleSample};
use crate::loss::{LossFamily, LossSpec};
use crate::montecarlo::median;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryClassification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    /// `N × D`.
    pub features: DMatrix<f64>,
    /// `{-1, 1}` for classification.
    pub targets: Vec<f64>,
    pub task: Task,
    /// Rows dropped during ingestion.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: DMatrix<f64>,
        targets: Vec<f64>,
        task: Task,
    ) -> Result<Self> {
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        let ds = Self {
            name: name.into(),
            feature_names,
            features,
            targets,
            task,
            dropped_rows: 0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(GadError::Dataset(format!("{}: no rows", self.name)));
        }
        if self.features.nrows() != self.targets.len() {
            return Err(GadError::Dataset(format!(
                "{}: {} feature rows but {} targets",
                self.name,
                self.features.nrows(),
                self.targets.len()
            )));
        }
        if self.features.iter().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(GadError::Dataset(format!("{}: non-finite entries", self.name)));
        }
        if self.task == Task::BinaryClassification
            && self.targets.iter().any(|&y| y != 1.0 && y != -1.0)
        {
            return Err(GadError::Dataset(format!(
                "{}: classification targets must be -1 or 1",
                self.name
            )));
        }
        Ok(())
    }

    /// Rows `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let features = DMatrix::from_fn(indices.len(), self.dim(), |i, j| {
            self.features[(indices[i], j)]
        });
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            features,
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            task: self.task,
            dropped_rows: self.dropped_rows,
        }
    }

    /// Writes the dataset as comma-separated text with a header row; the
    /// target is the last column, named `target`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header = self.feature_names.clone();
        header.push("target".into());
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.features.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.targets[i].to_string());
            w.write_record(&rec).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| GadError::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> GadError {
    GadError::io(path, std::io::Error::other(e.to_string()))
}

/// Target column by header name or 0-based position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetColumn {
    Index(usize),
    Name(String),
}

/// How to read one delimited dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    pub task: Task,
    pub target: TargetColumn,
    /// First line holds column names.
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Column names for header-less files.
    #[serde(default)]
    pub columns: Vec<String>,
    /// Columns excluded from the features.
    #[serde(default)]
    pub ignore: Vec<String>,
    /// Binary label `+1` iff the raw target exceeds this value.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// `,` or `;`; detected from the first line when absent.
    #[serde(default)]
    pub delimiter: Option<char>,
}

fn default_true() -> bool {
    true
}

impl DatasetSchema {
    pub fn new(name: impl Into<String>, task: Task, target: TargetColumn) -> Self {
        Self {
            name: name.into(),
            task,
            target,
            has_header: true,
            columns: Vec::new(),
            ignore: Vec::new(),
            threshold: None,
            delimiter: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GadError::Config(format!("schema: {e}")))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GadError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

fn detect_delimiter(first_line: &str) -> u8 {
    let semis = first_line.matches(';').count();
    let commas = first_line.matches(',').count();
    if semis > commas {
        b';'
    } else {
        b','
    }
}

/// Loads a delimited file as described by `schema`.
///
/// Rows with missing or unparseable fields are dropped and counted in
/// [`Dataset::dropped_rows`]. Without a threshold, classification targets must
/// take exactly two distinct raw values; sorted (numerically when both parse,
/// else lexically) they map to `-1` and `+1`.
pub fn load_with_schema(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GadError::io(path, e))?;
    parse_delimited(&text, schema)
}

/// Loads a delimited file with a header row.
pub fn load_csv(path: impl AsRef<Path>, target: TargetColumn, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    load_with_schema(path, &DatasetSchema::new(name, task, target))
}

pub fn parse_delimited(text: &str, schema: &DatasetSchema) -> Result<Dataset> {
    let first_line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delimiter = match schema.delimiter {
        Some(c) if c.is_ascii() => c as u8,
        Some(c) => return Err(GadError::Config(format!("unsupported delimiter {c:?}"))),
        None => detect_delimiter(first_line),
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let columns: Vec<String> = if schema.has_header {
        match records.next() {
            Some(Ok(r)) => r.iter().map(str::to_string).collect(),
            _ => return Err(GadError::Dataset(format!("{}: missing header", schema.name))),
        }
    } else if !schema.columns.is_empty() {
        schema.columns.clone()
    } else {
        let width = first_line.split(delimiter as char).count();
        (0..width).map(|j| j.to_string()).collect()
    };

    let target_idx = match &schema.target {
        TargetColumn::Index(i) if *i < columns.len() => *i,
        TargetColumn::Name(n) => columns.iter().position(|c| c == n).ok_or_else(|| {
            GadError::Dataset(format!("{}: target column `{n}` not found", schema.name))
        })?,
        TargetColumn::Index(i) => {
            return Err(GadError::Dataset(format!(
                "{}: target column {i} out of range for {} columns",
                schema.name,
                columns.len()
            )))
        }
    };
    for ig in &schema.ignore {
        if !columns.iter().any(|c| c == ig) {
            return Err(GadError::Dataset(format!(
                "{}: ignored column `{ig}` not found",
                schema.name
            )));
        }
    }
    let feature_idx: Vec<usize> = (0..columns.len())
        .filter(|&j| j != target_idx && !schema.ignore.contains(&columns[j]))
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_targets: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    for record in records {
        let Ok(record) = record else {
            dropped += 1;
            continue;
        };
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != columns.len() {
            dropped += 1;
            continue;
        }
        let parsed: Option<Vec<f64>> = feature_idx
            .iter()
            .map(|&j| record[j].parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let raw_target = record[target_idx].to_string();
        let target_ok = !raw_target.is_empty()
            && (schema.task == Task::BinaryClassification && schema.threshold.is_none()
                || raw_target.parse::<f64>().is_ok_and(f64::is_finite));
        match parsed {
            Some(row) if target_ok => {
                rows.push(row);
                raw_targets.push(raw_target);
            }
            _ => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(GadError::Dataset(format!(
            "{}: no usable rows ({dropped} dropped)",
            schema.name
        )));
    }

    let targets = match (schema.task, schema.threshold) {
        (Task::Regression, _) => raw_targets.iter().map(|t| t.parse().unwrap()).collect(),
        (Task::BinaryClassification, Some(th)) => raw_targets
            .iter()
            .map(|t| if t.parse::<f64>().unwrap() > th { 1.0 } else { -1.0 })
            .collect(),
        (Task::BinaryClassification, None) => map_binary_labels(&schema.name, &raw_targets)?,
    };
    if schema.task == Task::BinaryClassification {
        let positives = targets.iter().filter(|&&y| y > 0.0).count();
        if positives == 0 || positives == targets.len() {
            return Err(GadError::Dataset(format!(
                "{}: fewer than two distinct labels",
                schema.name
            )));
        }
    }

    let features = DMatrix::from_fn(rows.len(), feature_idx.len(), |i, j| rows[i][j]);
    let ds = Dataset {
        name: schema.name.clone(),
        feature_names: feature_idx.iter().map(|&j| columns[j].clone()).collect(),
        features,
        targets,
        task: schema.task,
        dropped_rows: dropped,
    };
    ds.validate()?;
    Ok(ds)
}

fn map_binary_labels(name: &str, raw: &[String]) -> Result<Vec<f64>> {
    let distinct: BTreeSet<&str> = raw.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(GadError::Dataset(format!(
            "{name}: expected two distinct labels, found {}",
            distinct.len()
        )));
    }
    let mut labels: Vec<&str> = distinct.into_iter().collect();
    if let (Ok(a), Ok(b)) = (labels[0].parse::<f64>(), labels[1].parse::<f64>()) {
        if b < a {
            labels.swap(0, 1);
        }
    }
    let negative = labels[0];
    Ok(raw
        .iter()
        .map(|t| if t == negative { -1.0 } else { 1.0 })
        .collect())
}

/// Per-feature statistics from [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    /// Columns with standard deviation below `1e-12`; centered only.
    pub constant_columns: Vec<usize>,
}

/// Centers every column and scales it to unit (population) standard
/// deviation.
pub fn standardize(dataset: &Dataset) -> (Dataset, Standardization) {
    let (n, d) = dataset.features.shape();
    let mut out = dataset.clone();
    let mut stats = Standardization {
        means: Vec::with_capacity(d),
        std_devs: Vec::with_capacity(d),
        constant_columns: Vec::new(),
    };
    for j in 0..d {
        let col = dataset.features.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let constant = sd < 1e-12;
        if constant {
            stats.constant_columns.push(j);
        }
        for i in 0..n {
            let centered = dataset.features[(i, j)] - mean;
            out.features[(i, j)] = if constant { centered } else { centered / sd };
        }
        stats.means.push(mean);
        stats.std_devs.push(sd);
    }
    (out, stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Heterogeneous,
    Bagged,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Heterogeneous => "heterogeneous",
            Protocol::Bagged => "bagged",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = GadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hetero" | "heterogeneous" => Ok(Protocol::Heterogeneous),
            "bagged" | "bagging" => Ok(Protocol::Bagged),
            other => Err(GadError::Config(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub losses: Vec<LossSpec<f64>>,
    pub train: TrainConfig,
    pub n_bags: usize,
    pub standardize: bool,
    pub seed: u64,
    /// Fraction of rows held out for evaluation; training-set evaluation when
    /// `None`.
    pub holdout: Option<f64>,
    /// Expert treated as the newest boosting learner; last when `None`.
    pub gb_held_out: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(protocol: Protocol, losses: Vec<LossSpec<f64>>) -> Self {
        Self {
            protocol,
            losses,
            train: TrainConfig::default(),
            n_bags: 3,
            standardize: true,
            seed: 0,
            holdout: None,
            gb_held_out: None,
        }
    }

    /// Losses evaluated when none are requested.
    pub fn default_losses(task: Task) -> Vec<LossSpec<f64>> {
        let families: &[LossFamily] = match task {
            Task::BinaryClassification => &[
                LossFamily::Logistic,
                LossFamily::Exponential,
                LossFamily::SmoothHinge,
            ],
            Task::Regression => &[LossFamily::Squared, LossFamily::AbsSqrt],
        };
        families
            .iter()
            .map(|&f| LossSpec::with_default_epsilon(f))
            .collect()
    }

    fn validate(&self, dataset: &Dataset) -> Result<()> {
        self.train.validate()?;
        if self.losses.is_empty() {
            return Err(GadError::Config("no losses requested".into()));
        }
        for spec in &self.losses {
            if spec.family.is_classification() && dataset.task != Task::BinaryClassification {
                return Err(GadError::Config(format!(
                    "{} loss needs binary targets but {} is a regression dataset",
                    spec.family, dataset.name
                )));
            }
        }
        if self.protocol == Protocol::Bagged && self.n_bags == 0 {
            return Err(GadError::Config("n_bags must be at least 1".into()));
        }
        if let Some(h) = self.holdout {
            if !(h > 0.0 && h < 1.0) {
                return Err(GadError::Config(format!(
                    "holdout fraction must lie in (0, 1), got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of a two-sided paired sign test on `|a_i| < |b_i|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    /// Pairs where the first error is smaller.
    pub first_smaller: usize,
    pub second_smaller: usize,
    pub p_value: f64,
}

/// Two-sided exact sign test; ties are discarded.
pub fn paired_sign_test(first: &[f64], second: &[f64]) -> SignTest {
    let (mut a, mut b) = (0usize, 0usize);
    for (x, y) in first.iter().zip(second) {
        if x.is_nan() || y.is_nan() {
            continue;
        }
        match x.abs().total_cmp(&y.abs()) {
            std::cmp::Ordering::Less => a += 1,
            std::cmp::Ordering::Greater => b += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let n = a + b;
    let p_value = if n == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
        (2.0 * dist.cdf(a.min(b) as u64)).min(1.0)
    };
    SignTest {
        first_smaller: a,
        second_smaller: b,
        p_value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Approximation {
    Gad,
    Wgt,
    Gb,
}

/// One `(dataset, loss)` line of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub dataset: String,
    pub loss: LossSpec<f64>,
    pub protocol: Protocol,
    pub e_gad: f64,
    pub e_wgt: f64,
    pub e_gb: f64,
    /// Instances with at least one undefined relative error.
    pub n_excluded: usize,
    pub n_degenerate: usize,
    pub n_instances: usize,
    /// Non-degenerate instances where the decomposition bound failed by more
    /// than `1e-9`.
    pub bound_violations: usize,
    pub winner: Approximation,
    pub sign_test_gad_vs_wgt: SignTest,
    pub sign_test_gad_vs_gb: SignTest,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
    }
}

fn nan_if_undefined(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Scores every instance of `eval` with `experts` and aggregates the
/// relative errors of each approximation for `spec`.
pub fn evaluate_ensemble(
    dataset_name: &str,
    protocol: Protocol,
    spec: LossSpec<f64>,
    experts: &[LinearExpert],
    eval: &Dataset,
    gb_held_out: Option<usize>,
) -> Result<ReportRow> {
    let scores: Vec<Vec<f64>> = experts
        .iter()
        .map(|e| e.predict_all(&eval.features))
        .collect::<Result<_>>()?;
    let k = experts.len();
    let held_out = if k >= 2 {
        Some(gb_held_out.unwrap_or(k - 1))
    } else {
        None
    };

    let n = eval.len();
    let (mut e_gad, mut e_wgt, mut e_gb) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut n_excluded, mut n_degenerate, mut bound_violations) = (0, 0, 0);
    for i in 0..n {
        let predictions = scores.iter().map(|s| s[i]).collect();
        let sample = EnsembleSample::equal_weights(eval.targets[i], predictions)?;
        let r = decompose_with_held_out(spec, &sample, held_out)
            .map_err(|e| GadError::Domain(format!("{dataset_name}/{spec}: instance {i}: {e}")))?;
        let g = relative_error(r.ensemble_loss, r.l_gad);
        let w = relative_error(r.ensemble_loss, r.l_wgt);
        let b = r.l_gb.and_then(|gb| relative_error(r.ensemble_loss, gb));
        if g.is_none() || w.is_none() || b.is_none() {
            n_excluded += 1;
        }
        e_gad.push(nan_if_undefined(g));
        e_wgt.push(nan_if_undefined(w));
        e_gb.push(nan_if_undefined(b));
        if r.degenerate_curvature {
            n_degenerate += 1;
        } else if r.ensemble_loss > r.theorem_bound + 1e-9 {
            bound_violations += 1;
        }
    }

    let med = |v: &[f64]| median(v).unwrap_or(f64::NAN);
    let (mg, mw, mb) = (med(&e_gad), med(&e_wgt), med(&e_gb));
    let winner = [(Approximation::Gad, mg), (Approximation::Wgt, mw), (Approximation::Gb, mb)]
        .into_iter()
        .filter(|(_, v)| !v.is_nan())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map_or(Approximation::Gad, |(a, _)| a);

    Ok(ReportRow {
        dataset: dataset_name.to_string(),
        loss: spec,
        protocol,
        e_gad: mg,
        e_wgt: mw,
        e_gb: mb,
        n_excluded,
        n_degenerate,
        n_instances: n,
        bound_violations,
        winner,
        sign_test_gad_vs_wgt: paired_sign_test(&e_gad, &e_wgt),
        sign_test_gad_vs_gb: paired_sign_test(&e_gad, &e_gb),
    })
}

/// Standardizes (if configured) and splits into training and evaluation sets.
fn prepare(dataset: &Dataset, config: &ExperimentConfig) -> (Dataset, Dataset) {
    let data = if config.standardize {
        standardize(dataset).0
    } else {
        dataset.clone()
    };
    match config.holdout {
        None => (data.clone(), data),
        Some(frac) => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
            let n_eval = ((data.len() as f64 * frac).round() as usize).clamp(1, data.len() - 1);
            let (eval_idx, train_idx) = idx.split_at(n_eval);
            (data.select(train_idx), data.select(eval_idx))
        }
    }
}

/// Expert kinds of the heterogeneous protocol for a task.
pub fn heterogeneous_kinds(task: Task) -> [ExpertKind; 3] {
    match task {
        Task::BinaryClassification => [ExpertKind::Logistic, ExpertKind::SvmSmoothHinge, ExpertKind::Lda],
        Task::Regression => [ExpertKind::LeastSquares, ExpertKind::Lad, ExpertKind::Huber],
    }
}

/// Expert kind of the bagged protocol: logistic regression for
/// classification, least squares for regression.
pub fn bagged_kind(task: Task) -> ExpertKind {
    match task {
        Task::BinaryClassification => ExpertKind::Logistic,
        Task::Regression => ExpertKind::LeastSquares,
    }
}

fn train_error(dataset: &Dataset, kind: ExpertKind, e: GadError) -> GadError {
    GadError::Training(format!("{} / {}: {e}", dataset.name, kind.name()))
}

pub fn train_heterogeneous(train_set: &Dataset, config: &TrainConfig) -> Result<Vec<LinearExpert>> {
    heterogeneous_kinds(train_set.task)
        .iter()
        .map(|&kind| {
            train(kind, &train_set.features, &train_set.targets, config)
                .map_err(|e| train_error(train_set, kind, e))
        })
        .collect()
}

/// Sub-seed of bag `index`.
pub fn bag_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one expert of `kind` per bootstrap seed.
pub fn train_bagged(
    train_set: &Dataset,
    kind: ExpertKind,
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<Vec<LinearExpert>> {
    seeds
        .iter()
        .map(|&s| {
            let bag = train_set.select(&bag_sample(train_set.len(), s));
            train(kind, &bag.features, &bag.targets, config).map_err(|e| train_error(train_set, kind, e))
        })
        .collect()
}

fn evaluate_all(
    dataset: &Dataset,
    config: &ExperimentConfig,
    experts: &[LinearExpert],
    eval: &Dataset,
) -> Result<ExperimentReport> {
    let rows = config
        .losses
        .iter()
        .map(|&spec| {
            evaluate_ensemble(
                &dataset.name,
                config.protocol,
                spec,
                experts,
                eval,
                config.gb_held_out,
            )
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentReport { rows })
}

/// Three different experts trained on the same data, equal weights.
pub fn run_heterogeneous(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.protocol != Protocol::Heterogeneous {
        return Err(GadError::Config("protocol must be heterogeneous".into()));
    }
    config.validate(dataset)?;
    let (train_set, eval) = prepare(dataset, config);
    let experts = train_heterogeneous(&train_set, &config.train)?;
    evaluate_all(dataset, config, &experts, &eval)
}

/// One expert kind trained on `n_bags` bootstrap resamples, equal weights.
pub fn run_bagged(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.protocol != Protocol::Bagged {
        return Err(GadError::Config("protocol must be bagged".into()));
    }
    config.validate(dataset)?;
    let (train_set, eval) = prepare(dataset, config);
    let seeds: Vec<u64> = (0..config.n_bags).map(|i| bag_seed(config.seed, i)).collect();
    let experts = train_bagged(&train_set, bagged_kind(dataset.task), &seeds, &config.train)?;
    evaluate_all(dataset, config, &experts, &eval)
}

pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.protocol {
        Protocol::Heterogeneous => run_heterogeneous(dataset, config),
        Protocol::Bagged => run_bagged(dataset, config),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = GadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(GadError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "dataset",
    "loss",
    "epsilon",
    "protocol",
    "e_gad",
    "e_wgt",
    "e_gb",
    "n_excluded",
    "n_degenerate",
];

/// Three significant digits in scientific notation, e.g. `7.00e-3`.
pub fn format_sci3(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.2e}")
    }
}

fn row_cells(r: &ReportRow) -> [String; 9] {
    let eps = if r.loss.family.uses_epsilon() {
        r.loss.epsilon.to_string()
    } else {
        String::new()
    };
    [
        r.dataset.clone(),
        r.loss.family.name().to_string(),
        eps,
        r.protocol.name().to_string(),
        format_sci3(r.e_gad),
        format_sci3(r.e_wgt),
        format_sci3(r.e_gb),
        r.n_excluded.to_string(),
        r.n_degenerate.to_string(),
    ]
}

/// Renders rows in their stored order.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&REPORT_COLUMNS.join(","));
            out.push('\n');
            for r in &report.rows {
                let cells = row_cells(r).map(|c| {
                    if c.contains([',', '"', '\n']) {
                        format!("\"{}\"", c.replace('"', "\"\""))
                    } else {
                        c
                    }
                });
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", REPORT_COLUMNS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(REPORT_COLUMNS.len()));
            for r in &report.rows {
                let _ = writeln!(out, "| {} |", row_cells(r).join(" | "));
            }
        }
    }
    out
}

pub fn write_report(
    report: &ExperimentReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_report(report, format)).map_err(|e| GadError::io(path, e))
}

/// Offline stand-ins for the tabular benchmarks, with matching shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// 768 × 8 binary classification with a logistic label model.
    PimaLike,
    /// 4177 × 7 regression on a positive, skewed count-like target.
    AbaloneLikeRegression,
    /// The regression target thresholded at 10.
    AbaloneLikeClassification,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::PimaLike => "synthetic_pima",
            SyntheticKind::AbaloneLikeRegression => "synthetic_abalone_regression",
            SyntheticKind::AbaloneLikeClassification => "synthetic_abalone_classification",
        }
    }
}

fn correlated_features(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    // one shared factor plus independent noise
    let mut x = DMatrix::zeros(n, d);
    for i in 0..n {
        let common: f64 = StandardNormal.sample(rng);
        for j in 0..d {
            let own: f64 = StandardNormal.sample(rng);
            x[(i, j)] = 0.5 * common + own * (1.0 + 0.1 * j as f64);
        }
    }
    x
}

fn abalone_like(seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = (4177, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = correlated_features(&mut rng, n, d);
    let weights = [1.2, 0.8, -0.4, 0.9, -0.6, 0.3, 0.5];
    let y = (0..n)
        .map(|i| {
            let signal: f64 = (0..d).map(|j| weights[j] * x[(i, j)]).sum();
            let noise: f64 = StandardNormal.sample(&mut rng);
            // skewed, positive target centered near 10
            (10.0 + signal + 1.5 * noise + 0.15 * noise * noise * noise).max(1.0).round()
        })
        .collect();
    (x, y)
}

/// Deterministic synthetic dataset.
pub fn synthetic(kind: SyntheticKind, seed: u64) -> Dataset {
    let (features, targets, task) = match kind {
        SyntheticKind::PimaLike => {
            let (n, d) = (768, 8);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = correlated_features(&mut rng, n, d);
            let weights = [1.1, 0.9, -0.3, 0.2, 0.0, 0.7, 0.4, 0.3];
            let y = (0..n)
                .map(|i| {
                    let logit: f64 = -0.6 + (0..d).map(|j| weights[j] * x[(i, j)]).sum::<f64>();
                    let u: f64 = rand::Rng::random(&mut rng);
                    if u < 1.0 / (1.0 + (-logit).exp()) {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect();
            (x, y, Task::BinaryClassification)
        }
        SyntheticKind::AbaloneLikeRegression => {
            let (x, y) = abalone_like(seed);
            (x, y, Task::Regression)
        }
        SyntheticKind::AbaloneLikeClassification => {
            let (x, y) = abalone_like(seed);
            let labels = y.iter().map(|&v| if v > 10.0 { 1.0 } else { -1.0 }).collect();
            (x, labels, Task::BinaryClassification)
        }
    };
    Dataset::new(kind.name(), features, targets, task).expect("synthetic data is valid")
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn schema(task: Task, target: TargetColumn) -> DatasetSchema {
        DatasetSchema::new("t", task, target)
    }

    #[test]
    fn parses_simple_file() {
        let text = "a,b,y\n1,2,3\n4,5,6\n7,8,9\n";
        let ds = parse_delimited(text, &schema(Task::Regression, TargetColumn::Name("y".into()))).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.targets, vec![3.0, 6.0, 9.0]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features[(2, 1)], 8.0);
        assert_eq!(ds.dropped_rows, 0);
    }

    #[test]
    fn drops_malformed_rows() {
        let text = "a,b,y\n1,2,3\n4,oops,6\n7,8,9\n1,2\n";
        let ds = parse_delimited(text, &schema(Task::Regression, TargetColumn::Index(2))).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dropped_rows, 2);
    }

    #[test]
    fn semicolon_detected() {
        let text = "\"fixed acidity\";\"quality\"\n7.4;5\n7.8;6\n";
        let ds = parse_delimited(text, &schema(Task::Regression, TargetColumn::Name("quality".into()))).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_names, vec!["fixed acidity"]);
    }

    #[test]
    fn threshold_labels() {
        let text = "M,0.45,0.36,15\nF,0.53,0.42,7\nI,0.33,0.25,10\nM,0.44,0.36,11\n";
        let mut s = schema(Task::BinaryClassification, TargetColumn::Name("rings".into()));
        s.has_header = false;
        s.columns = vec!["sex".into(), "length".into(), "diameter".into(), "rings".into()];
        s.ignore = vec!["sex".into()];
        s.threshold = Some(10.0);
        let ds = parse_delimited(text, &s).unwrap();
        assert_eq!(ds.targets, vec![1.0, -1.0, -1.0, 1.0]);
        assert_eq!(ds.dim(), 2);
    }

    #[test]
    fn string_labels_sorted() {
        let text = "x,class\n1,h\n2,g\n3,g\n";
        let ds = parse_delimited(text, &schema(Task::BinaryClassification, TargetColumn::Index(1))).unwrap();
        assert_eq!(ds.targets, vec![1.0, -1.0, -1.0]);
        // numeric labels sort numerically: "10" > "9"
        let text = "x,c\n1,10\n2,9\n";
        let ds = parse_delimited(text, &schema(Task::BinaryClassification, TargetColumn::Index(1))).unwrap();
        assert_eq!(ds.targets, vec![1.0, -1.0]);
    }

    #[test]
    fn ingestion_errors() {
        let one_class = "x,c\n1,a\n2,a\n";
        assert!(parse_delimited(one_class, &schema(Task::BinaryClassification, TargetColumn::Index(1))).is_err());
        let three = "x,c\n1,a\n2,b\n3,c\n";
        assert!(parse_delimited(three, &schema(Task::BinaryClassification, TargetColumn::Index(1))).is_err());
        let empty = "x,y\nfoo,bar\n";
        assert!(parse_delimited(empty, &schema(Task::Regression, TargetColumn::Index(1))).is_err());
        let fine = "x,y\n1,2\n";
        assert!(parse_delimited(fine, &schema(Task::Regression, TargetColumn::Name("z".into()))).is_err());
        assert!(parse_delimited(fine, &schema(Task::Regression, TargetColumn::Index(5))).is_err());
        let thresholded_all_low = "x,y\n1,2\n2,3\n";
        let mut s = schema(Task::BinaryClassification, TargetColumn::Index(1));
        s.threshold = Some(10.0);
        assert!(parse_delimited(thresholded_all_low, &s).is_err());
    }

    #[test]
    fn schema_toml() {
        let text = r#"
name = "abalone"
task = "binary_classification"
target = "rings"
has_header = false
columns = ["sex", "length", "rings"]
ignore = ["sex"]
threshold = 10
"#;
        let s = DatasetSchema::from_toml_str(text).unwrap();
        assert_eq!(s.target, TargetColumn::Name("rings".into()));
        assert_eq!(s.threshold, Some(10.0));
        let again = DatasetSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(again, s);
        let by_index = DatasetSchema::from_toml_str("name='p'\ntask='regression'\ntarget=8\n").unwrap();
        assert_eq!(by_index.target, TargetColumn::Index(8));
        assert!(DatasetSchema::from_toml_str("name='p'\ntask='regression'\ntarget=8\nbogus=1\n").is_err());
    }

    #[test]
    fn standardization() {
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 5.0, -1.0, 2.0, 5.0, 1.0]);
        let ds = Dataset::new("s", x, vec![0.0, 1.0], Task::Regression).unwrap();
        let (z, stats) = standardize(&ds);
        assert_eq!(z.features.column(0).as_slice(), &[-1.0, 1.0]);
        assert_eq!(z.features.column(1).as_slice(), &[0.0, 0.0]);
        assert_eq!(stats.constant_columns, vec![1]);
        // already standardized columns are unchanged
        let (zz, _) = standardize(&z);
        for (a, b) in zz.features.iter().zip(z.features.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
        }
    }

    #[test]
    fn sign_test() {
        let a = [0.1; 20];
        let b = [0.2; 20];
        let t = paired_sign_test(&a, &b);
        assert_eq!(t.first_smaller, 20);
        assert!(t.p_value < 1e-5);
        let t = paired_sign_test(&[1.0, 2.0], &[2.0, 1.0]);
        assert_abs_diff_eq!(t.p_value, 1.0, epsilon = 1e-12);
        assert_eq!(paired_sign_test(&[1.0], &[1.0]).p_value, 1.0);
    }

    #[test]
    fn squared_loss_regression_is_exact_for_both_protocols() {
        let ds = synthetic(SyntheticKind::AbaloneLikeRegression, 3).select(&(0..400).collect::<Vec<_>>());
        for protocol in [Protocol::Heterogeneous, Protocol::Bagged] {
            let config = ExperimentConfig::new(protocol, vec![LossSpec::squared()]);
            let report = run_experiment(&ds, &config).unwrap();
            let row = &report.rows[0];
            assert!(row.e_gad <= 1e-10, "{protocol:?}: {}", row.e_gad);
            assert_eq!(row.bound_violations, 0);
        }
    }

    #[test]
    fn identical_experts_have_zero_diversity() {
        let ds = synthetic(SyntheticKind::PimaLike, 1);
        let experts = train_bagged(&ds, ExpertKind::Logistic, &[7, 7, 7], &TrainConfig::default()).unwrap();
        assert_eq!(experts[0], experts[1]);
        assert_eq!(experts[1], experts[2]);
        let row = evaluate_ensemble("p", Protocol::Bagged, LossSpec::logistic(), &experts, &ds, None).unwrap();
        assert_abs_diff_eq!(row.e_gad, row.e_wgt, epsilon = 1e-12);
        assert_abs_diff_eq!(row.e_gad, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bagged_experts_differ() {
        let ds = synthetic(SyntheticKind::PimaLike, 1);
        let seeds: Vec<u64> = (0..3).map(|i| bag_seed(5, i)).collect();
        let experts = train_bagged(&ds, ExpertKind::Logistic, &seeds, &TrainConfig::default()).unwrap();
        assert!(experts[0].coefficients != experts[1].coefficients
            || experts[1].coefficients != experts[2].coefficients);
    }

    #[test]
    fn classification_loss_on_regression_data_rejected() {
        let ds = synthetic(SyntheticKind::AbaloneLikeRegression, 3);
        let config = ExperimentConfig::new(Protocol::Heterogeneous, vec![LossSpec::logistic()]);
        assert!(matches!(run_heterogeneous(&ds, &config), Err(GadError::Config(_))));
        let wrong = ExperimentConfig::new(Protocol::Bagged, vec![LossSpec::squared()]);
        assert!(run_heterogeneous(&ds, &wrong).is_err());
    }

    #[test]
    fn holdout_split_evaluates_remaining_rows() {
        let ds = synthetic(SyntheticKind::PimaLike, 2);
        let mut config = ExperimentConfig::new(Protocol::Heterogeneous, vec![LossSpec::logistic()]);
        config.holdout = Some(0.25);
        let report = run_heterogeneous(&ds, &config).unwrap();
        assert_eq!(report.rows[0].n_instances, 192);
        config.holdout = Some(1.0);
        assert!(run_heterogeneous(&ds, &config).is_err());
    }

    #[test]
    fn report_rendering() {
        let empty = ExperimentReport::default();
        assert_eq!(render_report(&empty, ReportFormat::Csv), format!("{}\n", REPORT_COLUMNS.join(",")));
        let ds = synthetic(SyntheticKind::PimaLike, 1);
        let config = ExperimentConfig::new(
            Protocol::Heterogeneous,
            vec![LossSpec::smooth_hinge(0.5).unwrap()],
        );
        let report = run_heterogeneous(&ds, &config).unwrap();
        let csv = render_report(&report, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("synthetic_pima,smooth_hinge,0.5,heterogeneous,"));
        let md = render_report(&report, ReportFormat::Markdown);
        assert_eq!(md.lines().count(), 3);
        assert_eq!(format_sci3(0.007), "7.00e-3");
        assert_eq!(format_sci3(0.0), "0.00e0");
    }

    #[test]
    fn synthetic_shapes() {
        let p = synthetic(SyntheticKind::PimaLike, 0);
        assert_eq!((p.len(), p.dim()), (768, 8));
        let a = synthetic(SyntheticKind::AbaloneLikeRegression, 0);
        assert_eq!((a.len(), a.dim()), (4177, 7));
        let c = synthetic(SyntheticKind::AbaloneLikeClassification, 0);
        assert_eq!(c.task, Task::BinaryClassification);
        assert_eq!(synthetic(SyntheticKind::PimaLike, 0), p);
    }
}
