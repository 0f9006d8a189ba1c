//! Randomized agreement check between the closed-form curvature extrema and
//! a dense grid search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GadError, Result};
use crate::loss::{Interval, LossSpec};

/// Default grid resolution of the brute-force search.
pub const DEFAULT_GRID_POINTS: usize = 100_000;
/// Default agreement tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Targets are drawn from `[-TARGET_RANGE, TARGET_RANGE]`.
const TARGET_RANGE: f64 = 3.0;
/// Interval endpoints are drawn from `[-ENDPOINT_RANGE, ENDPOINT_RANGE]`.
const ENDPOINT_RANGE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckCase {
    pub y: f64,
    pub interval: Interval<f64>,
    /// `max(|Δmin|, |Δmax|)` between closed form and grid.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCheck {
    pub trials: usize,
    pub tolerance: f64,
    pub worst: CheckCase,
    /// Cases whose deviation exceeds the tolerance, in trial order.
    pub failures: Vec<CheckCase>,
}

impl CurvatureCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Draws `trials` random `(y, B)` pairs and compares
/// [`LossSpec::curvature_bounds`] to [`LossSpec::curvature_bounds_grid`].
///
/// Targets are uniform on `[-3, 3]` and interval endpoints uniform on
/// `[-5, 5]`, so the target may fall outside the interval.
pub fn check_curvature(
    spec: LossSpec<f64>,
    trials: usize,
    grid_points: usize,
    tolerance: f64,
    seed: u64,
) -> Result<CurvatureCheck> {
    if trials == 0 {
        return Err(GadError::Config("trials must be at least 1".into()));
    }
    if grid_points < 2 {
        return Err(GadError::Config("grid must have at least 2 points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, Interval<f64>)> = (0..trials)
        .map(|_| {
            let y = rng.random_range(-TARGET_RANGE..=TARGET_RANGE);
            let a = rng.random_range(-ENDPOINT_RANGE..=ENDPOINT_RANGE);
            let b = rng.random_range(-ENDPOINT_RANGE..=ENDPOINT_RANGE);
            (y, Interval { lo: a.min(b), hi: a.max(b) })
        })
        .collect();

    let cases = draws
        .into_par_iter()
        .map(|(y, interval)| {
            let exact = spec.curvature_bounds(y, interval)?;
            let grid = spec.curvature_bounds_grid(y, interval, grid_points)?;
            let deviation = (exact.min - grid.min).abs().max((exact.max - grid.max).abs());
            Ok(CheckCase {
                y,
                interval,
                deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let worst = *cases
        .iter()
        .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
        .expect("at least one trial");
    let failures = cases
        .into_iter()
        .filter(|c| c.deviation.is_nan() || c.deviation > tolerance)
        .collect();
    Ok(CurvatureCheck {
        trials,
        tolerance,
        worst,
        failures,
    })
}
