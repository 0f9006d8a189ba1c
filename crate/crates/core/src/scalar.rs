use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar the loss and decomposition code is generic over.
///
/// Implemented for `f32` and `f64`. Everything in [`crate::loss`] and
/// [`crate::gad`] is written against this trait; the simulation, training and
/// experiment layers are `f64` only.
pub trait Scalar:
    'static
    + Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
{
    /// Converts an `f64` literal. Infallible for the implemented types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Stable logistic sigmoid `1 / (1 + e^-x)`.
#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Stable `ln(1 + e^x)`.
#[inline]
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `sigmoid(x) * sigmoid(-x)` written as `1 / (e^{x/2} + e^{-x/2})^2`, which
/// underflows to zero instead of producing `inf / inf` for large `|x|`.
#[inline]
pub(crate) fn sigmoid_bell<T: Scalar>(x: T) -> T {
    let half = x.abs() * T::lit(0.5);
    // e^{-|x|/2} / (1 + e^{-|x|})
    let e = (-half).exp();
    let denom = T::one() + e * e;
    let r = e / denom;
    r * r
}
