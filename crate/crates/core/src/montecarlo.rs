//! Monte Carlo sweeps of the decomposition over the mean expert prediction.
//!
//! At every grid value `μ` the sweep draws `n_samples` ensembles whose `K`
//! predictions are IID `N(μ, σ²)`, decomposes each one and records medians.
//!
//! Random numbers come from ChaCha8 (`rand_chacha::ChaCha8Rng`). Grid point
//! `i` uses `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`, so each
//! grid point has an independent, platform-independent stream and the sweep
//! can be evaluated in parallel without changing its output. Normal variates
//! are `μ + σ·Z` with `Z` from the ziggurat `rand_distr::StandardNormal`.
//! With [`SweepConfig::shared_draws`] every grid point reads stream 0 instead,
//! which removes sampling noise from the comparison across `μ`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::gad::{decompose_with_held_out, EnsembleSample};
use crate::loss::LossSpec;

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_SIGMA2: f64 = 2.0;
pub const DEFAULT_TARGET: f64 = 1.0;
pub const DEFAULT_EXPERTS: usize = 3;
pub const DEFAULT_MU_MIN: f64 = -4.0;
pub const DEFAULT_MU_MAX: f64 = 4.0;
pub const DEFAULT_MU_STEP: f64 = 0.1;

pub const CSV_HEADER: &str = "mu,median_loss,median_l_gad,median_l_wgt,median_l_gb,median_diversity,err_gad,err_wgt,err_gb,bound_beta,degenerate_count";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub spec: LossSpec<f64>,
    pub experts: usize,
    pub n_samples: usize,
    pub sigma2: f64,
    pub target: f64,
    pub mu_grid: Vec<f64>,
    pub seed: u64,
    /// Equal weights when `None`.
    pub weights: Option<Vec<f64>>,
    /// Expert held out for the boosting approximation; last when `None`.
    pub gb_held_out: Option<usize>,
    /// Reuse one stream of standard normals at every grid point, so rows
    /// differ only through `μ` (common random numbers). Each grid point gets
    /// its own stream otherwise.
    #[serde(default)]
    pub shared_draws: bool,
}

impl SweepConfig {
    /// Simulation defaults: `n = 1000`, `σ² = 2`, `Y = 1`, `K = 3`, `μ ∈ [-4, 4]`
    /// in steps of 0.1.
    pub fn new(spec: LossSpec<f64>) -> Self {
        Self {
            spec,
            experts: DEFAULT_EXPERTS,
            n_samples: DEFAULT_SAMPLES,
            sigma2: DEFAULT_SIGMA2,
            target: DEFAULT_TARGET,
            mu_grid: mu_grid(DEFAULT_MU_MIN, DEFAULT_MU_MAX, DEFAULT_MU_STEP)
                .expect("default grid is valid"),
            seed: 1,
            weights: None,
            gb_held_out: None,
            shared_draws: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.experts == 0 {
            return Err(GadError::Config("need at least one expert".into()));
        }
        if self.n_samples == 0 {
            return Err(GadError::Config("n_samples must be at least 1".into()));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(GadError::Config(format!(
                "sigma2 must be finite and positive, got {}",
                self.sigma2
            )));
        }
        if !self.target.is_finite() {
            return Err(GadError::Config("target must be finite".into()));
        }
        if self.mu_grid.is_empty() {
            return Err(GadError::Config("mu grid is empty".into()));
        }
        if self.mu_grid.iter().any(|m| !m.is_finite())
            || self.mu_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(GadError::Config(
                "mu grid must be finite and strictly increasing".into(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.experts {
                return Err(GadError::Config(format!(
                    "{} weights for {} experts",
                    w.len(),
                    self.experts
                )));
            }
            EnsembleSample::new(0.0, vec![0.0; self.experts], w.clone())?;
        }
        if let Some(h) = self.gb_held_out {
            if h >= self.experts {
                return Err(GadError::Config(format!(
                    "held-out expert {h} out of range for {} experts",
                    self.experts
                )));
            }
        }
        Ok(())
    }

    fn held_out(&self) -> Option<usize> {
        if self.experts < 2 {
            None
        } else {
            Some(self.gb_held_out.unwrap_or(self.experts - 1))
        }
    }
}

/// `min, min + step, …` up to and including `max` (within rounding).
pub fn mu_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) {
        return Err(GadError::Config("grid bounds must be finite".into()));
    }
    if step <= 0.0 {
        return Err(GadError::Config(format!("grid step must be positive, got {step}")));
    }
    if max < min {
        return Err(GadError::Config(format!("grid max {max} below min {min}")));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub median_loss: f64,
    pub median_l_gad: f64,
    pub median_l_wgt: f64,
    pub median_l_gb: f64,
    pub median_diversity: f64,
    pub median_abs_err_gad: f64,
    pub median_abs_err_wgt: f64,
    pub median_abs_err_gb: f64,
    pub median_bound_beta: f64,
    pub degenerate_count: usize,
}

fn draw_ensemble(
    rng: &mut ChaCha8Rng,
    k: usize,
    mu: f64,
    sigma: f64,
    target: f64,
    weights: Option<&[f64]>,
) -> Result<EnsembleSample<f64>> {
    let predictions: Vec<f64> = (0..k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mu + sigma * z
        })
        .collect();
    match weights {
        Some(w) => EnsembleSample::new(target, predictions, w.to_vec()),
        None => EnsembleSample::equal_weights(target, predictions),
    }
}

/// `K` IID `N(mu, sigma2)` predictions with equal weights, from a fresh
/// ChaCha8 stream seeded with `seed`.
pub fn sample_ensemble(
    seed: u64,
    k: usize,
    mu: f64,
    sigma2: f64,
    target: f64,
) -> Result<EnsembleSample<f64>> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(GadError::Config(format!("sigma2 must be positive, got {sigma2}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_ensemble(&mut rng, k, mu, sigma2.sqrt(), target, None)
}

fn grid_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn sweep_point(config: &SweepConfig, index: usize, mu: f64) -> Result<SweepRow> {
    let stream = if config.shared_draws { 0 } else { index };
    let mut rng = grid_rng(config.seed, stream);
    let sigma = config.sigma2.sqrt();
    let n = config.n_samples;
    let held_out = config.held_out();

    let mut loss = Vec::with_capacity(n);
    let mut l_gad = Vec::with_capacity(n);
    let mut l_wgt = Vec::with_capacity(n);
    let mut l_gb = Vec::with_capacity(n);
    let mut diversity = Vec::with_capacity(n);
    let mut err_gad = Vec::with_capacity(n);
    let mut err_wgt = Vec::with_capacity(n);
    let mut err_gb = Vec::with_capacity(n);
    let mut bound_beta = Vec::with_capacity(n);
    let mut degenerate_count = 0;

    for _ in 0..n {
        let sample = draw_ensemble(
            &mut rng,
            config.experts,
            mu,
            sigma,
            config.target,
            config.weights.as_deref(),
        )?;
        let r = decompose_with_held_out(config.spec, &sample, held_out)?;
        loss.push(r.ensemble_loss);
        l_gad.push(r.l_gad);
        l_wgt.push(r.l_wgt);
        diversity.push(r.diversity);
        err_gad.push((r.ensemble_loss - r.l_gad).abs());
        err_wgt.push((r.ensemble_loss - r.l_wgt).abs());
        if let Some(gb) = r.l_gb {
            l_gb.push(gb);
            err_gb.push((r.ensemble_loss - gb).abs());
        }
        bound_beta.push(r.bound_beta);
        degenerate_count += usize::from(r.degenerate_curvature);
    }

    let or_nan = |v: &[f64]| median(v).unwrap_or(f64::NAN);
    Ok(SweepRow {
        mu,
        median_loss: median(&loss)?,
        median_l_gad: median(&l_gad)?,
        median_l_wgt: median(&l_wgt)?,
        median_l_gb: or_nan(&l_gb),
        median_diversity: median(&diversity)?,
        median_abs_err_gad: median(&err_gad)?,
        median_abs_err_wgt: median(&err_wgt)?,
        median_abs_err_gb: or_nan(&err_gb),
        median_bound_beta: median(&bound_beta)?,
        degenerate_count,
    })
}

/// Runs the sweep, one row per grid value in grid order. Grid points are
/// evaluated in parallel; the output equals a sequential run bit for bit.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    config
        .mu_grid
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| sweep_point(config, i, mu))
        .collect()
}

/// Median with the midpoint convention for even lengths. NaN entries are the
/// undefined marker and are dropped first.
pub fn median(values: &[f64]) -> Result<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return Err(GadError::EmptyAfterExclusion);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Formats like C's `%.{digits}g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros trimmed.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes rows as CSV with 9 significant digits.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    let f = |x: f64| format_significant(x, 9);
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f(r.mu),
            f(r.median_loss),
            f(r.median_l_gad),
            f(r.median_l_wgt),
            f(r.median_l_gb),
            f(r.median_diversity),
            f(r.median_abs_err_gad),
            f(r.median_abs_err_wgt),
            f(r.median_abs_err_gb),
            f(r.median_bound_beta),
            r.degenerate_count
        )?;
    }
    Ok(())
}
