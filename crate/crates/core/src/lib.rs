//! Generalized ambiguity decomposition (GAD) of convex ensemble losses.
//!
//! A convex ensemble `f = Σ w_k f_k` of real-valued experts has a loss that,
//! for any loss twice differentiable in the prediction, is bounded by the
//! weighted expert loss minus a curvature-scaled diversity term plus a
//! remainder governed by the spread of the loss curvature. For squared error
//! the remainder vanishes and the bound is the classic ambiguity identity.
//!
//! - [`loss`]: the five loss families and closed-form curvature extrema.
//! - [`gad`]: the decomposition, its error bounds and baseline approximations.
//! - [`montecarlo`]: seeded sweeps over the mean expert prediction.
//! - [`experts`]: linear classifiers and regressors used as ensemble members.
//! - [`experiments`]: dataset ingestion and the two ensemble protocols.
//! - [`check`]: closed-form versus brute-force curvature fuzzing.
//!
//! The loss and decomposition layers are generic over [`Scalar`] (`f32`,
//! `f64`); the aliases below name the `f64` instantiations used by the rest of
//! the crate.

pub mod check;
pub mod error;
pub mod experiments;
pub mod experts;
pub mod gad;
pub mod loss;
pub mod montecarlo;
pub mod scalar;

pub use error::{GadError, Result};
pub use gad::{
    build_interval, decompose, decompose_with_held_out, diversity, gb_approx, pairwise_diversity,
    relative_error, EnsembleSample, GadReport,
};
pub use loss::{
    curvature_bounds, curvature_bounds_oracle, loss_curvature, loss_grad, loss_value,
    CurvaturePair, Interval, LossFamily, LossSpec,
};
pub use scalar::Scalar;

pub type LossSpecF64 = LossSpec<f64>;
pub type LossSpecF32 = LossSpec<f32>;
pub type IntervalF64 = Interval<f64>;
pub type CurvaturePairF64 = CurvaturePair<f64>;
pub type EnsembleSampleF64 = EnsembleSample<f64>;
pub type EnsembleSampleF32 = EnsembleSample<f32>;
pub type GadReportF64 = GadReport<f64>;
pub type GadReportF32 = GadReport<f32>;
