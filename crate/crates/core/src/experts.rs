//! Affine experts: three binary classifiers (logistic regression, smooth-hinge
//! linear SVM, homoscedastic LDA) and three regressors (least squares, least
//! absolute deviation, Huber), plus bootstrap resampling.
//!
//! Iterative trainers run deterministic full-batch gradient descent. Each
//! iteration tries a Barzilai-Borwein step and halves it until the Armijo
//! condition holds, so the objective never increases across accepted steps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::loss::{LossFamily, LossSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertKind {
    Logistic,
    SvmSmoothHinge,
    Lda,
    LeastSquares,
    Lad,
    Huber,
}

impl ExpertKind {
    pub fn name(self) -> &'static str {
        match self {
            ExpertKind::Logistic => "logistic",
            ExpertKind::SvmSmoothHinge => "svm_smooth_hinge",
            ExpertKind::Lda => "lda",
            ExpertKind::LeastSquares => "least_squares",
            ExpertKind::Lad => "lad",
            ExpertKind::Huber => "huber",
        }
    }

    pub fn is_classifier(self) -> bool {
        matches!(
            self,
            ExpertKind::Logistic | ExpertKind::SvmSmoothHinge | ExpertKind::Lda
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop once the objective gradient norm falls below this.
    pub tolerance: f64,
    /// First trial step; later steps use the Barzilai-Borwein estimate.
    pub step_size: f64,
    /// Ridge penalty on the coefficients (classifiers only).
    pub l2_penalty: f64,
    /// Smoothing of the LAD and SVM objectives.
    pub epsilon: f64,
    pub huber_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            tolerance: 1e-6,
            step_size: 1.0,
            l2_penalty: 1e-4,
            epsilon: 0.5,
            huber_delta: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(GadError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        if self.max_iterations == 0 {
            return Err(GadError::Config("max_iterations must be positive".into()));
        }
        positive("tolerance", self.tolerance)?;
        positive("step_size", self.step_size)?;
        positive("epsilon", self.epsilon)?;
        positive("huber_delta", self.huber_delta)?;
        if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
            return Err(GadError::Config(format!(
                "l2_penalty must be non-negative, got {}",
                self.l2_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// A ridge term was added to make a singular system solvable.
    pub ridge_applied: bool,
}

/// `coefficients · x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExpert {
    pub kind: ExpertKind,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub diagnostics: TrainDiagnostics,
}

impl LinearExpert {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(GadError::Precondition(format!(
                "expert expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (w, v)| acc + w * v))
    }

    /// Scores for every row of `features`.
    pub fn predict_all(&self, features: &DMatrix<f64>) -> Result<Vec<f64>> {
        if features.ncols() != self.dim() {
            return Err(GadError::Precondition(format!(
                "expert expects {} features, got {}",
                self.dim(),
                features.ncols()
            )));
        }
        let w = DVector::from_column_slice(&self.coefficients);
        Ok((features * w).iter().map(|s| s + self.intercept).collect())
    }
}

pub fn predict(expert: &LinearExpert, x: &[f64]) -> Result<f64> {
    expert.predict(x)
}

/// `n` indices drawn uniformly with replacement from `0..n`.
pub fn bag_sample(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn check_inputs(features: &DMatrix<f64>, targets: &[f64]) -> Result<()> {
    if features.nrows() != targets.len() {
        return Err(GadError::Precondition(format!(
            "{} feature rows but {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if features.nrows() == 0 {
        return Err(GadError::Precondition("no training rows".into()));
    }
    if features.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(GadError::Precondition("non-finite training data".into()));
    }
    Ok(())
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(GadError::Precondition("labels must be -1 or 1".into()));
    }
    let positives = labels.iter().filter(|&&y| y > 0.0).count();
    if positives == 0 || positives == labels.len() {
        return Err(GadError::Precondition(
            "both classes must be present".into(),
        ));
    }
    Ok(())
}

/// `[X | 1]`.
fn design_matrix(features: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = features.shape();
    let mut a = DMatrix::from_element(n, d + 1, 1.0);
    a.view_mut((0, 0), (n, d)).copy_from(features);
    a
}

fn split_params(theta: &DVector<f64>) -> (Vec<f64>, f64) {
    let d = theta.len() - 1;
    (theta.rows(0, d).iter().copied().collect(), theta[d])
}

/// Exact minimizer of `Σ (y_i − w·x_i − b)²` via the normal equations.
pub fn train_least_squares(features: &DMatrix<f64>, targets: &[f64]) -> Result<LinearExpert> {
    check_inputs(features, targets)?;
    let a = design_matrix(features);
    let y = DVector::from_column_slice(targets);
    let gram = a.tr_mul(&a);
    let rhs = a.tr_mul(&y);
    let mut ridge_applied = false;
    let theta = match gram.clone().cholesky().filter(|c| well_conditioned(c, &gram)) {
        Some(c) if features.nrows() > features.ncols() => c.solve(&rhs),
        _ => {
            ridge_applied = true;
            let p = gram.nrows();
            let regularized = gram + DMatrix::identity(p, p) * 1e-8;
            regularized
                .cholesky()
                .ok_or_else(|| GadError::Training("least squares system is singular".into()))?
                .solve(&rhs)
        }
    };
    let (coefficients, intercept) = split_params(&theta);
    Ok(LinearExpert {
        kind: ExpertKind::LeastSquares,
        coefficients,
        intercept,
        diagnostics: TrainDiagnostics {
            converged: true,
            ridge_applied,
            ..Default::default()
        },
    })
}

/// Homoscedastic LDA in closed form. The score is the raw discriminant
/// `w·x + b` with `w = Σ⁻¹(μ₊ − μ₋)` and `b = −w·(μ₊ + μ₋)/2 + ln(n₊/n₋)`.
pub fn train_lda(features: &DMatrix<f64>, labels: &[f64]) -> Result<LinearExpert> {
    check_inputs(features, labels)?;
    check_labels(labels)?;
    let (n, d) = features.shape();
    let mut mean_pos = DVector::zeros(d);
    let mut mean_neg = DVector::zeros(d);
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for (i, &y) in labels.iter().enumerate() {
        let row = features.row(i).transpose();
        if y > 0.0 {
            mean_pos += row;
            n_pos += 1;
        } else {
            mean_neg += row;
            n_neg += 1;
        }
    }
    mean_pos /= n_pos as f64;
    mean_neg /= n_neg as f64;

    let mut scatter = DMatrix::zeros(d, d);
    for (i, &y) in labels.iter().enumerate() {
        let mean = if y > 0.0 { &mean_pos } else { &mean_neg };
        let c = features.row(i).transpose() - mean;
        scatter += &c * c.transpose();
    }
    let cov = scatter / (n.saturating_sub(2).max(1) as f64);

    let diff = &mean_pos - &mean_neg;
    let mut ridge_applied = false;
    let w = match cov.clone().cholesky().filter(|c| well_conditioned(c, &cov)) {
        Some(c) => c.solve(&diff),
        None => {
            ridge_applied = true;
            let scale = (cov.trace() / d as f64).max(f64::MIN_POSITIVE);
            (cov + DMatrix::identity(d, d) * (1e-6 * scale))
                .cholesky()
                .ok_or_else(|| GadError::Training("pooled covariance is singular".into()))?
                .solve(&diff)
        }
    };
    let midpoint = (&mean_pos + &mean_neg) * 0.5;
    let intercept = -w.dot(&midpoint) + (n_pos as f64 / n_neg as f64).ln();
    Ok(LinearExpert {
        kind: ExpertKind::Lda,
        coefficients: w.iter().copied().collect(),
        intercept,
        diagnostics: TrainDiagnostics {
            converged: true,
            ridge_applied,
            ..Default::default()
        },
    })
}

/// Rejects factorizations whose smallest pivot is negligible next to the
/// matrix scale, which Cholesky alone accepts after rounding.
fn well_conditioned(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>, m: &DMatrix<f64>) -> bool {
    let scale = m.diagonal().amax();
    let l = c.l_dirty();
    (0..m.nrows()).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * scale)
}

/// Per-sample loss in the affine score and its derivative.
#[derive(Debug, Clone, Copy)]
enum SampleLoss {
    Margin(LossSpec<f64>),
    Huber(f64),
}

impl SampleLoss {
    fn value_and_grad(self, y: f64, s: f64) -> (f64, f64) {
        match self {
            SampleLoss::Margin(spec) => (spec.value_unchecked(y, s), spec.grad_unchecked(y, s)),
            SampleLoss::Huber(delta) => {
                let r = s - y;
                if r.abs() <= delta {
                    (0.5 * r * r, r)
                } else {
                    (delta * (r.abs() - 0.5 * delta), delta * r.signum())
                }
            }
        }
    }
}

/// Mean per-sample loss of `[X | 1] θ` plus `(λ/2)‖w‖²`.
struct LinearObjective<'a> {
    design: DMatrix<f64>,
    targets: &'a [f64],
    loss: SampleLoss,
    l2_penalty: f64,
}

impl LinearObjective<'_> {
    fn eval(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.targets.len() as f64;
        let scores = &self.design * theta;
        let mut value = 0.0;
        let mut dscore = DVector::zeros(scores.len());
        for (i, (&s, &y)) in scores.iter().zip(self.targets).enumerate() {
            let (l, g) = self.loss.value_and_grad(y, s);
            value += l;
            dscore[i] = g / n;
        }
        value /= n;
        let mut grad = self.design.tr_mul(&dscore);
        if self.l2_penalty > 0.0 {
            let d = theta.len() - 1;
            let w = theta.rows(0, d);
            value += 0.5 * self.l2_penalty * w.norm_squared();
            let mut gw = grad.rows_mut(0, d);
            gw += w * self.l2_penalty;
        }
        (value, grad)
    }
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

/// Descent with Barzilai-Borwein trial steps and Armijo backtracking.
fn minimize(
    objective: &LinearObjective<'_>,
    config: &TrainConfig,
) -> Result<(DVector<f64>, TrainDiagnostics)> {
    let p = objective.design.ncols();
    let mut theta = DVector::zeros(p);
    let (mut value, mut grad) = objective.eval(&theta);
    if !value.is_finite() {
        return Err(GadError::Training(format!("objective is {value} at the origin")));
    }
    let mut step = config.step_size;
    let mut diagnostics = TrainDiagnostics::default();

    for iteration in 0..config.max_iterations {
        let gnorm = grad.norm();
        diagnostics.iterations = iteration;
        diagnostics.gradient_norm = gnorm;
        if gnorm < config.tolerance {
            diagnostics.converged = true;
            return Ok((theta, diagnostics));
        }
        let g2 = gnorm * gnorm;
        let mut t = step;
        let accepted = loop {
            let candidate = &theta - &grad * t;
            let (v, g) = objective.eval(&candidate);
            if v.is_finite() && v <= value - ARMIJO * t * g2 {
                break Some((candidate, v, g, t));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((candidate, v, g, t)) = accepted else {
            // No decrease is representable any more: stationary to rounding.
            return Ok((theta, diagnostics));
        };
        if !v.is_finite() || v > value {
            return Err(GadError::Training(format!(
                "objective increased from {value} to {v}"
            )));
        }
        let s = &candidate - &theta;
        let dy = &g - &grad;
        let sy = s.dot(&dy);
        step = if sy > 0.0 {
            (s.norm_squared() / sy).clamp(1e-12, 1e12)
        } else {
            (2.0 * t).min(1e12)
        };
        theta = candidate;
        value = v;
        grad = g;
    }
    diagnostics.iterations = config.max_iterations;
    diagnostics.gradient_norm = grad.norm();
    diagnostics.converged = diagnostics.gradient_norm < config.tolerance;
    Ok((theta, diagnostics))
}

fn train_iterative(
    kind: ExpertKind,
    features: &DMatrix<f64>,
    targets: &[f64],
    loss: SampleLoss,
    l2_penalty: f64,
    config: &TrainConfig,
) -> Result<LinearExpert> {
    config.validate()?;
    check_inputs(features, targets)?;
    let objective = LinearObjective {
        design: design_matrix(features),
        targets,
        loss,
        l2_penalty,
    };
    let (theta, diagnostics) = minimize(&objective, config)?;
    let (coefficients, intercept) = split_params(&theta);
    Ok(LinearExpert {
        kind,
        coefficients,
        intercept,
        diagnostics,
    })
}

/// Least absolute deviation through the smooth `sqrt(r² + ε) − sqrt(ε)` loss.
pub fn train_lad(
    features: &DMatrix<f64>,
    targets: &[f64],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    let spec = LossSpec::new(LossFamily::AbsSqrt, config.epsilon)?;
    train_iterative(
        ExpertKind::Lad,
        features,
        targets,
        SampleLoss::Margin(spec),
        0.0,
        config,
    )
}

/// Huber regression: `r²/2` for `|r| ≤ δ`, `δ(|r| − δ/2)` beyond.
pub fn train_huber(
    features: &DMatrix<f64>,
    targets: &[f64],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    config.validate()?;
    train_iterative(
        ExpertKind::Huber,
        features,
        targets,
        SampleLoss::Huber(config.huber_delta),
        0.0,
        config,
    )
}

/// L2-penalized logistic regression on labels in `{-1, 1}`.
pub fn train_logistic(
    features: &DMatrix<f64>,
    labels: &[f64],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    check_inputs(features, labels)?;
    check_labels(labels)?;
    train_iterative(
        ExpertKind::Logistic,
        features,
        labels,
        SampleLoss::Margin(LossSpec::logistic()),
        config.l2_penalty,
        config,
    )
}

/// L2-penalized linear SVM with the smooth hinge loss.
pub fn train_linear_svm(
    features: &DMatrix<f64>,
    labels: &[f64],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    check_inputs(features, labels)?;
    check_labels(labels)?;
    let spec = LossSpec::new(LossFamily::SmoothHinge, config.epsilon)?;
    train_iterative(
        ExpertKind::SvmSmoothHinge,
        features,
        labels,
        SampleLoss::Margin(spec),
        config.l2_penalty,
        config,
    )
}

/// Trains one expert of the given kind.
pub fn train(
    kind: ExpertKind,
    features: &DMatrix<f64>,
    targets: &[f64],
    config: &TrainConfig,
) -> Result<LinearExpert> {
    match kind {
        ExpertKind::Logistic => train_logistic(features, targets, config),
        ExpertKind::SvmSmoothHinge => train_linear_svm(features, targets, config),
        ExpertKind::Lda => train_lda(features, targets),
        ExpertKind::LeastSquares => train_least_squares(features, targets),
        ExpertKind::Lad => train_lad(features, targets, config),
        ExpertKind::Huber => train_huber(features, targets, config),
    }
}
