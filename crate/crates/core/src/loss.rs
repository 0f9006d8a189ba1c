//! The five twice-differentiable loss families, their first and second
//! derivatives in the prediction argument, and closed-form extrema of the
//! second derivative over a closed interval.
//!
//! Every function takes the target `y` first and the prediction `z` second;
//! derivatives are with respect to `z`. The target is any finite real, since
//! the diversity term evaluates `l(f, f_k)` with the ensemble prediction in the
//! target slot.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::scalar::{sigmoid, sigmoid_bell, softplus, Scalar};

/// Smoothing parameter used when none is given.
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    /// `(y - z)^2`
    Squared,
    /// `(2/π)(y - z) atan((y - z)/ε)`
    AbsAtan,
    /// `sqrt((y - z)^2 + ε) - sqrt(ε)`
    AbsSqrt,
    /// `ln(1 + exp(-y z))`
    Logistic,
    /// `exp(-y z)`
    Exponential,
    /// `1 - y z + ε ln(1 + exp(-(1 - y z)/ε))`
    SmoothHinge,
}

impl LossFamily {
    pub const ALL: [LossFamily; 6] = [
        LossFamily::Squared,
        LossFamily::AbsAtan,
        LossFamily::AbsSqrt,
        LossFamily::Logistic,
        LossFamily::Exponential,
        LossFamily::SmoothHinge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Squared => "squared",
            LossFamily::AbsAtan => "abs_atan",
            LossFamily::AbsSqrt => "abs_sqrt",
            LossFamily::Logistic => "logistic",
            LossFamily::Exponential => "exponential",
            LossFamily::SmoothHinge => "smooth_hinge",
        }
    }

    pub fn uses_epsilon(self) -> bool {
        matches!(
            self,
            LossFamily::AbsAtan | LossFamily::AbsSqrt | LossFamily::SmoothHinge
        )
    }

    /// Margin losses meant for labels in `{-1, 1}`.
    pub fn is_classification(self) -> bool {
        matches!(
            self,
            LossFamily::Logistic | LossFamily::Exponential | LossFamily::SmoothHinge
        )
    }

    /// Families accepted by the pairwise diversity form.
    pub fn is_absolute(self) -> bool {
        matches!(self, LossFamily::AbsAtan | LossFamily::AbsSqrt)
    }
}

impl fmt::Display for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossFamily {
    type Err = GadError;

    fn from_str(s: &str) -> Result<Self> {
        let family = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "squared" | "sqr" | "squared_error" => LossFamily::Squared,
            "abs_atan" | "abs_approx1" => LossFamily::AbsAtan,
            "abs_sqrt" | "abs_approx2" | "abs" | "smooth_abs" => LossFamily::AbsSqrt,
            "logistic" | "log" => LossFamily::Logistic,
            "exponential" | "exp" => LossFamily::Exponential,
            "smooth_hinge" | "hinge" => LossFamily::SmoothHinge,
            other => return Err(GadError::Config(format!("unknown loss family `{other}`"))),
        };
        Ok(family)
    }
}

/// A loss family together with its smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec<T> {
    pub family: LossFamily,
    /// Ignored by families that have no smoothing.
    pub epsilon: T,
}

impl<T: Scalar> LossSpec<T> {
    pub fn new(family: LossFamily, epsilon: T) -> Result<Self> {
        if family.uses_epsilon() && !(epsilon.is_finite() && epsilon > T::zero()) {
            return Err(GadError::Domain(format!(
                "{family} requires a finite epsilon > 0, got {epsilon}"
            )));
        }
        Ok(Self { family, epsilon })
    }

    /// The family with `ε = 0.5`.
    pub fn with_default_epsilon(family: LossFamily) -> Self {
        Self {
            family,
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }

    pub fn squared() -> Self {
        Self::with_default_epsilon(LossFamily::Squared)
    }

    pub fn logistic() -> Self {
        Self::with_default_epsilon(LossFamily::Logistic)
    }

    pub fn exponential() -> Self {
        Self::with_default_epsilon(LossFamily::Exponential)
    }

    pub fn abs_atan(epsilon: T) -> Result<Self> {
        Self::new(LossFamily::AbsAtan, epsilon)
    }

    pub fn abs_sqrt(epsilon: T) -> Result<Self> {
        Self::new(LossFamily::AbsSqrt, epsilon)
    }

    pub fn smooth_hinge(epsilon: T) -> Result<Self> {
        Self::new(LossFamily::SmoothHinge, epsilon)
    }

    fn check(self, y: T, z: T) -> Result<()> {
        if !y.is_finite() || !z.is_finite() {
            return Err(GadError::Domain(format!(
                "{} evaluated at non-finite point (y = {y}, z = {z})",
                self.family
            )));
        }
        Ok(())
    }

    /// `l(y, z)`.
    pub fn value(self, y: T, z: T) -> Result<T> {
        self.check(y, z)?;
        Ok(self.value_unchecked(y, z))
    }

    /// `∂l/∂z`.
    pub fn grad(self, y: T, z: T) -> Result<T> {
        self.check(y, z)?;
        Ok(self.grad_unchecked(y, z))
    }

    /// `∂²l/∂z²`, never negative.
    pub fn curvature(self, y: T, z: T) -> Result<T> {
        self.check(y, z)?;
        Ok(self.curvature_unchecked(y, z))
    }

    pub(crate) fn value_unchecked(self, y: T, z: T) -> T {
        let eps = self.epsilon;
        match self.family {
            LossFamily::Squared => {
                let d = y - z;
                d * d
            }
            LossFamily::AbsAtan => {
                let d = y - z;
                T::lit(2.0) * T::FRAC_1_PI() * d * (d / eps).atan()
            }
            LossFamily::AbsSqrt => {
                // sqrt(d² + ε) - sqrt(ε) without the cancellation near d = 0
                let d2 = (y - z) * (y - z);
                d2 / ((d2 + eps).sqrt() + eps.sqrt())
            }
            LossFamily::Logistic => softplus(-(y * z)),
            LossFamily::Exponential => (-(y * z)).exp(),
            LossFamily::SmoothHinge => {
                // 1 - m + ε ln(1 + e^{-(1-m)/ε}) = ε softplus((1-m)/ε)
                let u = (T::one() - y * z) / eps;
                eps * softplus(u)
            }
        }
    }

    pub(crate) fn grad_unchecked(self, y: T, z: T) -> T {
        let eps = self.epsilon;
        match self.family {
            LossFamily::Squared => -T::lit(2.0) * (y - z),
            LossFamily::AbsAtan => {
                let r = (y - z) / eps;
                -T::lit(2.0) * T::FRAC_1_PI() * (r.atan() + r / (T::one() + r * r))
            }
            LossFamily::AbsSqrt => {
                let d = y - z;
                -d / (d * d + eps).sqrt()
            }
            LossFamily::Logistic => -y * sigmoid(-(y * z)),
            LossFamily::Exponential => -y * (-(y * z)).exp(),
            LossFamily::SmoothHinge => {
                let u = (T::one() - y * z) / eps;
                -y * sigmoid(u)
            }
        }
    }

    pub(crate) fn curvature_unchecked(self, y: T, z: T) -> T {
        let eps = self.epsilon;
        match self.family {
            LossFamily::Squared => T::lit(2.0),
            LossFamily::AbsAtan => {
                let r = (y - z) / eps;
                let q = T::one() + r * r;
                T::lit(4.0) * T::FRAC_1_PI() / (eps * q * q)
            }
            LossFamily::AbsSqrt => {
                let d = y - z;
                let s = d * d + eps;
                eps / (s * s.sqrt())
            }
            LossFamily::Logistic => y * y * sigmoid_bell(y * z),
            LossFamily::Exponential => y * y * (-(y * z)).exp(),
            LossFamily::SmoothHinge => {
                let u = (T::one() - y * z) / eps;
                y * y / eps * sigmoid_bell(u)
            }
        }
    }

    /// Shape of `z ↦ l''(y, z)`.
    fn curvature_shape(self, y: T) -> CurvatureShape<T> {
        let eps = self.epsilon;
        match self.family {
            LossFamily::Squared => CurvatureShape::Constant(T::lit(2.0)),
            LossFamily::AbsAtan => CurvatureShape::SymmetricPeak {
                center: y,
                peak: T::lit(4.0) * T::FRAC_1_PI() / eps,
            },
            LossFamily::AbsSqrt => CurvatureShape::SymmetricPeak {
                center: y,
                peak: T::one() / eps.sqrt(),
            },
            LossFamily::Logistic => CurvatureShape::SymmetricPeak {
                center: T::zero(),
                peak: y * y / T::lit(4.0),
            },
            LossFamily::Exponential => {
                if y == T::zero() {
                    CurvatureShape::Constant(T::zero())
                } else if y < T::zero() {
                    CurvatureShape::Increasing
                } else {
                    CurvatureShape::Decreasing
                }
            }
            LossFamily::SmoothHinge => {
                if y == T::zero() {
                    CurvatureShape::Constant(T::zero())
                } else {
                    CurvatureShape::SymmetricPeak {
                        center: y.recip(),
                        peak: y * y / (T::lit(4.0) * eps),
                    }
                }
            }
        }
    }

    /// Closed-form `(inf, sup)` of `l''(y, ·)` over `interval`.
    pub fn curvature_bounds(self, y: T, interval: Interval<T>) -> Result<CurvaturePair<T>> {
        self.check(y, interval.lo)?;
        self.check(y, interval.hi)?;
        let (lo, hi) = (interval.lo, interval.hi);
        let at = |z: T| self.curvature_unchecked(y, z);
        let pair = match self.curvature_shape(y) {
            CurvatureShape::Constant(c) => CurvaturePair { min: c, max: c },
            CurvatureShape::Decreasing => CurvaturePair {
                min: at(hi),
                max: at(lo),
            },
            CurvatureShape::Increasing => CurvaturePair {
                min: at(lo),
                max: at(hi),
            },
            CurvatureShape::SymmetricPeak { center, peak } => {
                let max = if hi < center {
                    at(hi)
                } else if lo > center {
                    at(lo)
                } else {
                    peak
                };
                // The endpoint farther from the peak is the minimum; ties go to
                // `hi`, where the value is equal by symmetry.
                let min = if lo + hi < center + center {
                    at(lo)
                } else {
                    at(hi)
                };
                CurvaturePair { min, max }
            }
        };
        Ok(pair)
    }

    /// Brute-force `(min, max)` of `l''(y, ·)` on `grid_points` evenly spaced
    /// points of `interval`, endpoints included.
    pub fn curvature_bounds_grid(
        self,
        y: T,
        interval: Interval<T>,
        grid_points: usize,
    ) -> Result<CurvaturePair<T>> {
        if grid_points < 2 {
            return Err(GadError::Precondition(format!(
                "grid needs at least 2 points, got {grid_points}"
            )));
        }
        self.check(y, interval.lo)?;
        self.check(y, interval.hi)?;
        let width = interval.hi - interval.lo;
        let last = grid_points - 1;
        let mut min = T::infinity();
        let mut max = T::neg_infinity();
        for i in 0..grid_points {
            let z = if i == last {
                interval.hi
            } else {
                interval.lo + width * T::count(i) / T::count(last)
            };
            let c = self.curvature_unchecked(y, z);
            min = min.min(c);
            max = max.max(c);
        }
        Ok(CurvaturePair { min, max })
    }
}

impl<T: Scalar> fmt::Display for LossSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.family.uses_epsilon() {
            write!(f, "{}(eps={})", self.family, self.epsilon)
        } else {
            write!(f, "{}", self.family)
        }
    }
}

enum CurvatureShape<T> {
    Constant(T),
    Increasing,
    Decreasing,
    /// Unimodal and mirror-symmetric about `center`.
    SymmetricPeak { center: T, peak: T },
}

/// Closed bounded interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(GadError::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Smallest interval containing every value. `None` when empty.
    pub fn hull<I: IntoIterator<Item = T>>(values: I) -> Option<Self> {
        let mut it = values.into_iter();
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { lo, hi })
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: T) -> T {
        x.max(self.lo).min(self.hi)
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }
}

/// Infimum and supremum of the second derivative over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvaturePair<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> CurvaturePair<T> {
    /// `max - min`.
    pub fn spread(&self) -> T {
        self.max - self.min
    }
}

pub fn loss_value<T: Scalar>(spec: LossSpec<T>, y: T, z: T) -> Result<T> {
    spec.value(y, z)
}

pub fn loss_grad<T: Scalar>(spec: LossSpec<T>, y: T, z: T) -> Result<T> {
    spec.grad(y, z)
}

pub fn loss_curvature<T: Scalar>(spec: LossSpec<T>, y: T, z: T) -> Result<T> {
    spec.curvature(y, z)
}

pub fn curvature_bounds<T: Scalar>(
    spec: LossSpec<T>,
    y: T,
    interval: Interval<T>,
) -> Result<CurvaturePair<T>> {
    spec.curvature_bounds(y, interval)
}

pub fn curvature_bounds_oracle<T: Scalar>(
    spec: LossSpec<T>,
    y: T,
    interval: Interval<T>,
    grid_points: usize,
) -> Result<CurvaturePair<T>> {
    spec.curvature_bounds_grid(y, interval, grid_points)
}
