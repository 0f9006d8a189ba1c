//! Generalized ambiguity decomposition of a convex ensemble's loss.
//!
//! For targets `Y`, expert predictions `f_1..f_K` and convex weights `w_k`, the
//! ensemble prediction is `f = Σ w_k f_k` and `B` is the smallest interval
//! holding `Y` and every `f_k`. With `M_Y, m_Y` the extrema of `l''(Y, ·)` on
//! `B` and `M_f` the supremum of `l''(f, ·)` on `B`:
//!
//! ```text
//! l(Y, f) ≤ Σ w_k l(Y, f_k) − d + ½ (M_Y − m_Y) Σ w_k (Y − f_k)²
//! d       = (M_Y / M_f) [Σ w_k l(f, f_k) − l(f, f)]
//! ```
//!
//! [`decompose`] evaluates every term of that inequality, the two error bounds
//! it implies, and the weighted-loss and gradient-boosting approximations the
//! decomposition is compared against.

use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::loss::{CurvaturePair, Interval, LossSpec};
use crate::scalar::Scalar;

/// Below this `M_f` the curvature ratio in the diversity term is replaced by
/// its second-order limit.
pub const DEGENERATE_CURVATURE: f64 = 1e-9;

/// Relative-error denominators smaller than this count as zero.
pub const ZERO_LOSS: f64 = 1e-12;

/// Target, expert predictions and convex weights for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSample<T> {
    pub target: T,
    pub predictions: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> EnsembleSample<T> {
    pub fn new(target: T, predictions: Vec<T>, weights: Vec<T>) -> Result<Self> {
        let sample = Self {
            target,
            predictions,
            weights,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// All weights `1/K`.
    pub fn equal_weights(target: T, predictions: Vec<T>) -> Result<Self> {
        let k = predictions.len();
        if k == 0 {
            return Err(GadError::InvalidSample("no expert predictions".into()));
        }
        let w = T::one() / T::count(k);
        Self::new(target, predictions, vec![w; k])
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn weight_tolerance(&self) -> T {
        T::lit(1e-9).max(T::epsilon() * T::count(4 * self.len().max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.predictions.len();
        if k == 0 {
            return Err(GadError::InvalidSample("no expert predictions".into()));
        }
        if self.weights.len() != k {
            return Err(GadError::InvalidSample(format!(
                "{k} predictions but {} weights",
                self.weights.len()
            )));
        }
        if !self.target.is_finite() {
            return Err(GadError::InvalidSample(format!(
                "target {} is not finite",
                self.target
            )));
        }
        if let Some(p) = self.predictions.iter().find(|p| !p.is_finite()) {
            return Err(GadError::InvalidSample(format!("prediction {p} is not finite")));
        }
        if let Some(w) = self
            .weights
            .iter()
            .find(|w| !w.is_finite() || **w < T::zero())
        {
            return Err(GadError::InvalidSample(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let total = self.weights.iter().fold(T::zero(), |a, &w| a + w);
        if (total - T::one()).abs() > self.weight_tolerance() {
            return Err(GadError::InvalidSample(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// `f = Σ w_k f_k`.
    pub fn ensemble_prediction(&self) -> T {
        let first = self.predictions[0];
        if self.predictions.iter().all(|&f| f == first) {
            return first;
        }
        self.predictions
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&f, &w)| acc + w * f)
    }

    fn weighted_sum(&self, mut term: impl FnMut(T) -> T) -> T {
        self.predictions
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&f, &w)| acc + w * term(f))
    }
}

/// Every quantity of the decomposition for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GadReport<T> {
    /// `l(Y, f)`
    pub ensemble_loss: T,
    /// `Σ w_k l(Y, f_k)`
    pub weighted_loss: T,
    pub diversity: T,
    /// `M_Y − m_Y`
    pub curvature_spread: T,
    /// `weighted_loss − diversity`
    pub l_gad: T,
    /// Jensen upper bound, equal to `weighted_loss`.
    pub l_wgt: T,
    /// First-order boosting expansion; `None` for single-expert ensembles.
    pub l_gb: Option<T>,
    /// Right-hand side of the decomposition inequality.
    pub theorem_bound: T,
    /// `Σ w_k (Y − f_k)²`
    pub beta: T,
    /// `max_k (Y − f_k)²`
    pub delta: T,
    pub bound_beta: T,
    pub bound_delta: T,
    pub m_y: T,
    #[serde(rename = "M_y")]
    pub big_m_y: T,
    #[serde(rename = "M_f")]
    pub big_m_f: T,
    pub degenerate_curvature: bool,
}

/// `[min(Y, f_1..f_K), max(Y, f_1..f_K)]`.
pub fn build_interval<T: Scalar>(sample: &EnsembleSample<T>) -> Result<Interval<T>> {
    sample.validate()?;
    Ok(interval_of(sample))
}

fn interval_of<T: Scalar>(sample: &EnsembleSample<T>) -> Interval<T> {
    Interval::hull(std::iter::once(sample.target).chain(sample.predictions.iter().copied()))
        .expect("validated sample is non-empty")
}

/// Diversity together with the curvature quantities it was built from.
#[derive(Debug, Clone, Copy)]
struct DiversityTerms<T> {
    value: T,
    interval: Interval<T>,
    /// Ensemble prediction clamped into the interval.
    ensemble: T,
    at_target: CurvaturePair<T>,
    max_at_ensemble: T,
    degenerate: bool,
}

fn diversity_terms<T: Scalar>(
    spec: LossSpec<T>,
    sample: &EnsembleSample<T>,
) -> Result<DiversityTerms<T>> {
    let interval = interval_of(sample);
    // f lies in B mathematically; clamp away rounding drift
    let f = interval.clamp(sample.ensemble_prediction());
    let at_target = spec.curvature_bounds(sample.target, interval)?;
    let max_at_ensemble = spec.curvature_bounds(f, interval)?.max;

    let degenerate = max_at_ensemble < T::lit(DEGENERATE_CURVATURE);
    let value = if degenerate {
        let spread = sample.weighted_sum(|fk| (fk - f) * (fk - f));
        at_target.max * T::lit(0.5) * spread
    } else {
        let self_loss = spec.value(f, f)?;
        // Σ w_k [l(f, f_k) − l(f, f)]; each term vanishes when f_k = f
        let mut excess = T::zero();
        for (&fk, &w) in sample.predictions.iter().zip(&sample.weights) {
            excess += w * (spec.value(f, fk)? - self_loss);
        }
        at_target.max / max_at_ensemble * excess
    };
    Ok(DiversityTerms {
        value,
        interval,
        ensemble: f,
        at_target,
        max_at_ensemble,
        degenerate,
    })
}

/// Curvature-scaled spread of the experts around the ensemble prediction.
///
/// When `M_f` falls below [`DEGENERATE_CURVATURE`] this returns
/// `(M_Y/2) Σ w_k (f_k − f)²`.
pub fn diversity<T: Scalar>(spec: LossSpec<T>, sample: &EnsembleSample<T>) -> Result<T> {
    sample.validate()?;
    Ok(diversity_terms(spec, sample)?.value)
}

/// Full decomposition with the last expert held out for the boosting term.
pub fn decompose<T: Scalar>(spec: LossSpec<T>, sample: &EnsembleSample<T>) -> Result<GadReport<T>> {
    let held_out = sample.len().checked_sub(1);
    decompose_with_held_out(spec, sample, held_out)
}

/// Full decomposition; `held_out` (0-based) selects the expert treated as the
/// newest boosting learner. `None` skips the boosting term.
pub fn decompose_with_held_out<T: Scalar>(
    spec: LossSpec<T>,
    sample: &EnsembleSample<T>,
    held_out: Option<usize>,
) -> Result<GadReport<T>> {
    sample.validate()?;
    let terms = diversity_terms(spec, sample)?;
    let y = sample.target;

    let ensemble_loss = spec.value(y, sample.ensemble_prediction())?;
    let mut weighted_loss = T::zero();
    for (&fk, &w) in sample.predictions.iter().zip(&sample.weights) {
        weighted_loss += w * spec.value(y, fk)?;
    }
    let beta = sample.weighted_sum(|fk| (y - fk) * (y - fk));
    let delta = sample
        .predictions
        .iter()
        .map(|&fk| (y - fk) * (y - fk))
        .fold(T::zero(), T::max);

    let spread = terms.at_target.spread();
    let half = T::lit(0.5);
    let l_gad = weighted_loss - terms.value;

    let l_gb = match held_out {
        Some(k) if sample.len() >= 2 => Some(gb_approx(spec, sample, k)?),
        Some(k) if k >= sample.len() => {
            return Err(GadError::Precondition(format!(
                "held-out index {k} out of range for {} experts",
                sample.len()
            )))
        }
        _ => None,
    };

    debug_assert!(terms.interval.contains(terms.ensemble));
    Ok(GadReport {
        ensemble_loss,
        weighted_loss,
        diversity: terms.value,
        curvature_spread: spread,
        l_gad,
        l_wgt: weighted_loss,
        l_gb,
        theorem_bound: l_gad + half * spread * beta,
        beta,
        delta,
        bound_beta: half * spread * beta,
        bound_delta: half * spread * delta,
        m_y: terms.at_target.min,
        big_m_y: terms.at_target.max,
        big_m_f: terms.max_at_ensemble,
        degenerate_curvature: terms.degenerate,
    })
}

/// Diversity written through pairwise expert losses, for the smooth absolute
/// losses with equal weights:
/// `(M_Y/M_f) · (1/(K(K−1))) · Σ_{i<j} l(f_i, f_j)`.
pub fn pairwise_diversity<T: Scalar>(spec: LossSpec<T>, sample: &EnsembleSample<T>) -> Result<T> {
    if !spec.family.is_absolute() {
        return Err(GadError::UnsupportedFamily(spec.family.name()));
    }
    sample.validate()?;
    let k = sample.len();
    if k < 2 {
        return Err(GadError::Precondition(
            "pairwise diversity needs at least two experts".into(),
        ));
    }
    let equal = T::one() / T::count(k);
    let tol = sample.weight_tolerance();
    if sample.weights.iter().any(|&w| (w - equal).abs() > tol) {
        return Err(GadError::Precondition(
            "pairwise diversity requires equal weights".into(),
        ));
    }
    let terms = diversity_terms(spec, sample)?;
    let mut pair_sum = T::zero();
    for (i, &a) in sample.predictions.iter().enumerate() {
        for &b in &sample.predictions[i + 1..] {
            pair_sum += spec.value(a, b)?;
        }
    }
    let ratio = terms.at_target.max / terms.max_at_ensemble;
    Ok(ratio * pair_sum / (T::count(k) * T::count(k - 1)))
}

/// First-order boosting approximation `l(Y, g) + v f_h l'(Y, g)` with
/// `g = Σ_{k≠h} w_k f_k` and `v = w_h` for the held-out expert `h` (0-based).
pub fn gb_approx<T: Scalar>(
    spec: LossSpec<T>,
    sample: &EnsembleSample<T>,
    held_out: usize,
) -> Result<T> {
    sample.validate()?;
    let k = sample.len();
    if k < 2 {
        return Err(GadError::Precondition(
            "boosting approximation needs at least two experts".into(),
        ));
    }
    if held_out >= k {
        return Err(GadError::Precondition(format!(
            "held-out index {held_out} out of range for {k} experts"
        )));
    }
    let g = sample
        .predictions
        .iter()
        .zip(&sample.weights)
        .enumerate()
        .filter(|(i, _)| *i != held_out)
        .fold(T::zero(), |acc, (_, (&f, &w))| acc + w * f);
    let step = sample.weights[held_out] * sample.predictions[held_out];
    let y = sample.target;
    Ok(spec.value(y, g)? + step * spec.grad(y, g)?)
}

/// `|1 − approx/true|`. A zero true loss gives `Some(0)` when the
/// approximation is also zero and `None` (undefined) otherwise.
pub fn relative_error<T: Scalar>(true_loss: T, approx_loss: T) -> Option<T> {
    let zero = T::lit(ZERO_LOSS);
    if true_loss.abs() < zero {
        return if approx_loss.abs() < zero {
            Some(T::zero())
        } else {
            None
        };
    }
    Some((T::one() - approx_loss / true_loss).abs())
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::loss::LossFamily;

    fn eq(target: f64, f: &[f64]) -> EnsembleSample<f64> {
        EnsembleSample::equal_weights(target, f.to_vec()).unwrap()
    }

    fn spec(family: LossFamily) -> LossSpec<f64> {
        LossSpec::with_default_epsilon(family)
    }

    #[test]
    fn sample_validation() {
        assert!(EnsembleSample::new(0.0, vec![], vec![]).is_err());
        assert!(EnsembleSample::new(0.0, vec![1.0], vec![0.5]).is_err());
        assert!(EnsembleSample::new(0.0, vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(EnsembleSample::new(0.0, vec![f64::NAN], vec![1.0]).is_err());
        assert!(EnsembleSample::new(f64::INFINITY, vec![1.0], vec![1.0]).is_err());
        assert!(EnsembleSample::new(0.0, vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(EnsembleSample::new(0.0, vec![1.0, 2.0], vec![0.25, 0.75]).is_ok());
        let s = eq(0.0, &[1.0, 2.0, 3.0]);
        assert_eq!(s.weights, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn intervals() {
        let b = build_interval(&eq(1.0, &[0.5, 2.0, -1.0])).unwrap();
        assert_eq!((b.lo, b.hi), (-1.0, 2.0));
        let b = build_interval(&eq(3.0, &[3.0, 3.0, 3.0])).unwrap();
        assert_eq!((b.lo, b.hi), (3.0, 3.0));
        let b = build_interval(&EnsembleSample::new(0.0, vec![1.0], vec![1.0]).unwrap()).unwrap();
        assert_eq!((b.lo, b.hi), (0.0, 1.0));
    }

    #[test]
    fn squared_diversity_is_weighted_variance() {
        let d = diversity(spec(LossFamily::Squared), &eq(0.0, &[1.0, -1.0])).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn identical_experts_have_no_diversity() {
        for family in LossFamily::ALL {
            let d = diversity(spec(family), &eq(1.0, &[0.3, 0.3, 0.3])).unwrap();
            assert_abs_diff_eq!(d, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ambiguity_identity_for_squared_loss() {
        let r = decompose(spec(LossFamily::Squared), &eq(0.0, &[1.0, -1.0])).unwrap();
        assert_eq!(r.ensemble_loss, 0.0);
        assert_eq!(r.weighted_loss, 1.0);
        assert_abs_diff_eq!(r.diversity, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.l_gad, 0.0, epsilon = 1e-15);
        assert_eq!(r.curvature_spread, 0.0);
        assert_eq!(r.bound_beta, 0.0);
        assert!(!r.degenerate_curvature);
    }

    #[test]
    fn single_expert() {
        for family in LossFamily::ALL {
            let s = EnsembleSample::new(0.7, vec![-0.4], vec![1.0]).unwrap();
            let r = decompose(spec(family), &s).unwrap();
            assert_abs_diff_eq!(r.diversity, 0.0, epsilon = 1e-15);
            assert_eq!(r.l_gad, r.weighted_loss);
            assert_abs_diff_eq!(r.l_gad, r.ensemble_loss, epsilon = 1e-15);
            assert_abs_diff_eq!(r.beta, 1.21, epsilon = 1e-14);
            assert_eq!(r.beta, r.delta);
            assert_eq!(r.l_gb, None);
        }
    }

    #[test]
    fn degenerate_curvature_uses_quadratic_fallback() {
        // f = 0 exactly: l''(0, ·) vanishes for the margin losses
        let s = eq(1.0, &[-0.5, 0.5]);
        for family in [LossFamily::Logistic, LossFamily::Exponential, LossFamily::SmoothHinge] {
            let sp = spec(family);
            let r = decompose(sp, &s).unwrap();
            assert!(r.degenerate_curvature, "{family}");
            assert_eq!(r.big_m_f, 0.0);
            assert_abs_diff_eq!(r.diversity, r.big_m_y * 0.5 * 0.25, epsilon = 1e-15);
            assert!(r.ensemble_loss <= r.theorem_bound + 1e-12);
        }
    }

    #[test]
    fn pairwise_examples() {
        let sp = LossSpec::abs_sqrt(0.5).unwrap();
        let v = pairwise_diversity(sp, &eq(1.0, &[0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (4.5f64.sqrt() - 0.5f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(v, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let tiny = LossSpec::abs_sqrt(1e-12).unwrap();
        assert_eq!(pairwise_diversity(tiny, &eq(1.0, &[0.4, 0.4, 0.4])).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_preconditions() {
        let s = eq(1.0, &[0.0, 2.0]);
        assert!(matches!(
            pairwise_diversity(spec(LossFamily::Squared), &s),
            Err(GadError::UnsupportedFamily("squared"))
        ));
        assert!(matches!(
            pairwise_diversity(spec(LossFamily::Logistic), &s),
            Err(GadError::UnsupportedFamily(_))
        ));
        let skewed = EnsembleSample::new(1.0, vec![0.0, 2.0], vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            pairwise_diversity(spec(LossFamily::AbsSqrt), &skewed),
            Err(GadError::Precondition(_))
        ));
        let single = EnsembleSample::new(1.0, vec![0.0], vec![1.0]).unwrap();
        assert!(pairwise_diversity(spec(LossFamily::AbsAtan), &single).is_err());
    }

    #[test]
    fn gb_examples() {
        let sq = spec(LossFamily::Squared);
        let v = gb_approx(sq, &eq(0.0, &[1.0, 1.0]), 1).unwrap();
        assert_abs_diff_eq!(v, 0.75, epsilon = 1e-15);

        let ex = spec(LossFamily::Exponential);
        let v = gb_approx(ex, &eq(1.0, &[0.0, 0.1]), 1).unwrap();
        assert_abs_diff_eq!(v, 0.95, epsilon = 1e-15);

        // zero held-out prediction leaves l(Y, g)
        for family in LossFamily::ALL {
            let sp = spec(family);
            let s = eq(1.0, &[0.4, -1.2, 0.0]);
            let g = (0.4 - 1.2) / 3.0;
            assert_abs_diff_eq!(
                gb_approx(sp, &s, 2).unwrap(),
                sp.value(1.0, g).unwrap(),
                epsilon = 1e-15
            );
        }

        let single = EnsembleSample::new(1.0, vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(gb_approx(sq, &single, 0), Err(GadError::Precondition(_))));
        assert!(gb_approx(sq, &eq(0.0, &[1.0, 2.0]), 2).is_err());
    }

    #[test]
    fn decompose_uses_last_expert_for_boosting() {
        let sp = spec(LossFamily::Logistic);
        let s = eq(1.0, &[0.3, -0.8, 1.9]);
        let r = decompose(sp, &s).unwrap();
        assert_eq!(r.l_gb, Some(gb_approx(sp, &s, 2).unwrap()));
        let r0 = decompose_with_held_out(sp, &s, Some(0)).unwrap();
        assert_eq!(r0.l_gb, Some(gb_approx(sp, &s, 0).unwrap()));
        assert!(decompose_with_held_out(sp, &s, Some(3)).is_err());
    }

    #[test]
    fn relative_errors() {
        assert_eq!(relative_error(2.0, 2.0), Some(0.0));
        assert_eq!(relative_error(2.0, 1.0), Some(0.5));
        assert_eq!(relative_error(0.0, 0.0), Some(0.0));
        assert_eq!(relative_error(0.0, 0.3), None);
        assert_eq!(relative_error(1.0, 3.0), Some(2.0));
    }

    #[test]
    fn report_generic_over_f32() {
        let sp: LossSpec<f32> = LossSpec::with_default_epsilon(LossFamily::Exponential);
        let s = EnsembleSample::equal_weights(1.0f32, vec![0.2, 0.8, 1.4]).unwrap();
        let r = decompose(sp, &s).unwrap();
        assert!(r.ensemble_loss <= r.theorem_bound + 1e-5);
        assert!(r.diversity >= 0.0);
    }
}
