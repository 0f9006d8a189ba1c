//! `gad`: decompose single ensembles, run Monte Carlo sweeps, evaluate
//! trained ensembles on tabular data and fuzz the curvature closed forms.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or input error, 3 loss
//! domain error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gad_core::check::{check_curvature, DEFAULT_GRID_POINTS, DEFAULT_TOLERANCE};
use gad_core::experiments::{
    load_with_schema, render_report, run_experiment, DatasetSchema,
    ExperimentConfig, Protocol, ReportFormat,
};
use gad_core::experts::TrainConfig;
use gad_core::loss::DEFAULT_EPSILON;
use gad_core::montecarlo::{self, SweepConfig};
use gad_core::{decompose_with_held_out, EnsembleSample, GadError, LossFamily, LossSpec};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "gad", version, about = "Generalized ambiguity decomposition of ensemble losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose one ensemble sample and print every term as JSON.
    Decompose(DecomposeArgs),
    /// Monte Carlo sweep over the mean expert prediction, written as CSV.
    Sweep(SweepArgs),
    /// Train an ensemble on a dataset and report approximation errors.
    Experiment(ExperimentArgs),
    /// Compare closed-form curvature extrema with a brute-force grid.
    CheckCurvature(CheckArgs),
}

#[derive(Args)]
struct LossArgs {
    /// squared, abs_atan, abs_sqrt, logistic, exponential or smooth_hinge.
    #[arg(long, value_parser = parse_family)]
    loss: LossFamily,
    /// Smoothing parameter of abs_atan, abs_sqrt and smooth_hinge.
    #[arg(long, default_value_t = DEFAULT_EPSILON, allow_negative_numbers = true)]
    epsilon: f64,
}

impl LossArgs {
    fn spec(&self) -> Result<LossSpec<f64>, GadError> {
        LossSpec::new(self.loss, self.epsilon)
    }
}

fn parse_family(s: &str) -> Result<LossFamily, String> {
    s.parse().map_err(|e: GadError| e.to_string())
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    loss: LossArgs,
    /// Inline JSON: {"y": 1.0, "f": [0.5, 1.5], "w": [0.5, 0.5]}; "w" defaults to equal weights.
    #[arg(long, conflicts_with = "sample_file", required_unless_present = "sample_file")]
    sample: Option<String>,
    /// File holding the sample JSON.
    #[arg(long)]
    sample_file: Option<PathBuf>,
    /// Expert (1-based) treated as the newest boosting learner; defaults to the last.
    #[arg(long)]
    held_out: Option<usize>,
    /// Single-line JSON instead of pretty-printed.
    #[arg(long)]
    compact: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleJson {
    y: f64,
    f: Vec<f64>,
    #[serde(default)]
    w: Option<Vec<f64>>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_family, default_value = "abs_sqrt")]
    loss: LossFamily,
    #[arg(long, default_value_t = DEFAULT_EPSILON, allow_negative_numbers = true)]
    epsilon: f64,
    /// Experts per ensemble.
    #[arg(long, default_value_t = montecarlo::DEFAULT_EXPERTS)]
    k: usize,
    /// Ensembles drawn per grid value.
    #[arg(long, default_value_t = montecarlo::DEFAULT_SAMPLES)]
    n: usize,
    /// Variance of the expert predictions.
    #[arg(long, default_value_t = montecarlo::DEFAULT_SIGMA2, allow_negative_numbers = true)]
    sigma2: f64,
    /// Target value.
    #[arg(long, default_value_t = montecarlo::DEFAULT_TARGET, allow_negative_numbers = true)]
    y: f64,
    #[arg(long, default_value_t = montecarlo::DEFAULT_MU_MIN, allow_negative_numbers = true)]
    mu_min: f64,
    #[arg(long, default_value_t = montecarlo::DEFAULT_MU_MAX, allow_negative_numbers = true)]
    mu_max: f64,
    #[arg(long, default_value_t = montecarlo::DEFAULT_MU_STEP, allow_negative_numbers = true)]
    mu_step: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Expert (1-based) held out for the boosting approximation.
    #[arg(long)]
    held_out: Option<usize>,
    /// Reuse the same normal draws at every grid value.
    #[arg(long)]
    shared_draws: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Hetero,
    Bagged,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Delimited data file (comma or semicolon).
    #[arg(long)]
    data: PathBuf,
    /// TOML schema describing the columns of the data file.
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_enum, default_value = "hetero")]
    protocol: ProtocolArg,
    /// Comma-separated families, each optionally `family:epsilon`. Defaults
    /// depend on the task.
    #[arg(long, value_delimiter = ',')]
    losses: Vec<String>,
    /// Smoothing for families listed without an explicit epsilon.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap resamples for the bagged protocol.
    #[arg(long, default_value_t = 3)]
    n_bags: usize,
    /// Evaluate on this held-out fraction instead of the training set.
    #[arg(long)]
    holdout: Option<f64>,
    /// Keep raw feature scales.
    #[arg(long)]
    no_standardize: bool,
    /// Expert (1-based) treated as the newest boosting learner.
    #[arg(long)]
    held_out: Option<usize>,
    /// Print paired sign-test p-values to standard error.
    #[arg(long)]
    sign_test: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    loss: LossArgs,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Points of the brute-force grid.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<GadError> for Failure {
    fn from(e: GadError) -> Self {
        Self {
            code: if e.is_domain() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Experiment(a) => cmd_experiment(&a),
        Command::CheckCurvature(a) => cmd_check_curvature(&a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn zero_based(held_out: Option<usize>) -> Result<Option<usize>, Failure> {
    match held_out {
        Some(0) => Err(Failure::usage("--held-out is 1-based")),
        other => Ok(other.map(|h| h - 1)),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_decompose(a: &DecomposeArgs) -> Result<u8, Failure> {
    let text = match (&a.sample, &a.sample_file) {
        (Some(s), _) => s.clone(),
        (None, Some(p)) => std::fs::read_to_string(p)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", p.display())))?,
        (None, None) => return Err(Failure::usage("need --sample or --sample-file")),
    };
    let raw: SampleJson =
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("malformed sample: {e}")))?;
    let sample = match raw.w {
        Some(w) => EnsembleSample::new(raw.y, raw.f, w),
        None => EnsembleSample::equal_weights(raw.y, raw.f),
    }?;
    let spec = a.loss.spec()?;
    let held_out = match zero_based(a.held_out)? {
        Some(h) if h >= sample.len() => {
            return Err(Failure::usage(format!(
                "--held-out {} exceeds the {} experts",
                h + 1,
                sample.len()
            )))
        }
        Some(h) => Some(h),
        None => sample.len().checked_sub(1),
    };
    let report = decompose_with_held_out(spec, &sample, held_out)?;
    let json = if a.compact {
        serde_json::to_string(&report)
    } else {
        serde_json::to_string_pretty(&report)
    }
    .expect("report serializes");
    println!("{json}");
    Ok(0)
}

fn cmd_sweep(a: &SweepArgs) -> Result<u8, Failure> {
    let spec = LossSpec::new(a.loss, a.epsilon)?;
    let grid = montecarlo::mu_grid(a.mu_min, a.mu_max, a.mu_step)?;
    let config = SweepConfig {
        experts: a.k,
        n_samples: a.n,
        sigma2: a.sigma2,
        target: a.y,
        mu_grid: grid,
        seed: a.seed,
        gb_held_out: zero_based(a.held_out)?,
        shared_draws: a.shared_draws,
        ..SweepConfig::new(spec)
    };
    let rows = montecarlo::run_sweep(&config)?;
    let mut out = output(a.out.as_deref())?;
    montecarlo::write_sweep_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(0)
}

fn parse_loss(item: &str, default_epsilon: f64) -> Result<LossSpec<f64>, Failure> {
    let (name, eps) = match item.split_once(':') {
        Some((n, e)) => (
            n,
            e.parse::<f64>()
                .map_err(|_| Failure::usage(format!("bad epsilon in `{item}`")))?,
        ),
        None => (item, default_epsilon),
    };
    let family: LossFamily = name.parse()?;
    Ok(LossSpec::new(family, eps)?)
}

fn cmd_experiment(a: &ExperimentArgs) -> Result<u8, Failure> {
    let schema = DatasetSchema::from_file(&a.schema)?;
    let dataset = load_with_schema(&a.data, &schema)?;
    if dataset.dropped_rows > 0 {
        eprintln!("{}: dropped {} malformed rows", dataset.name, dataset.dropped_rows);
    }
    let losses = if a.losses.is_empty() {
        ExperimentConfig::default_losses(dataset.task)
            .into_iter()
            .map(|s| LossSpec::new(s.family, a.epsilon))
            .collect::<Result<_, _>>()?
    } else {
        a.losses
            .iter()
            .map(|l| parse_loss(l.trim(), a.epsilon))
            .collect::<Result<_, _>>()?
    };
    let protocol = match a.protocol {
        ProtocolArg::Hetero => Protocol::Heterogeneous,
        ProtocolArg::Bagged => Protocol::Bagged,
    };
    let config = ExperimentConfig {
        n_bags: a.n_bags,
        standardize: !a.no_standardize,
        seed: a.seed,
        holdout: a.holdout,
        gb_held_out: zero_based(a.held_out)?,
        train: TrainConfig {
            seed: a.seed,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::new(protocol, losses)
    };
    let report = run_experiment(&dataset, &config)?;
    if a.sign_test {
        for r in &report.rows {
            let t = r.sign_test_gad_vs_wgt;
            let u = r.sign_test_gad_vs_gb;
            eprintln!(
                "{} {}: GAD vs WGT p = {:.3e} ({} / {}), GAD vs GB p = {:.3e} ({} / {})",
                r.dataset,
                r.loss.family,
                t.p_value,
                t.first_smaller,
                t.second_smaller,
                u.p_value,
                u.first_smaller,
                u.second_smaller
            );
        }
    }
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    let mut out = output(a.out.as_deref())?;
    out.write_all(render_report(&report, format).as_bytes())?;
    out.flush()?;
    Ok(0)
}

fn cmd_check_curvature(a: &CheckArgs) -> Result<u8, Failure> {
    let spec = a.loss.spec()?;
    let r = check_curvature(spec, a.trials, a.grid, a.tolerance, a.seed)?;
    let w = r.worst;
    println!(
        "{}: {} trials, {}-point grid, worst deviation {:.3e} at y = {}, B = [{}, {}]",
        spec.family, r.trials, a.grid, w.deviation, w.y, w.interval.lo, w.interval.hi
    );
    if r.passed() {
        println!("PASS (tolerance {:.1e})", a.tolerance);
        Ok(0)
    } else {
        for c in r.failures.iter().take(10) {
            println!(
                "  deviation {:.3e} at y = {}, B = [{}, {}]",
                c.deviation, c.y, c.interval.lo, c.interval.hi
            );
        }
        println!(
            "FAIL: {} of {} trials exceed tolerance {:.1e}",
            r.failures.len(),
            r.trials,
            a.tolerance
        );
        Ok(1)
    }
}
