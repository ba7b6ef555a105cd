//! Scalar bound for the generic link-budget math.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar usable by the formulas in [`crate::phy`].
///
/// Implemented for `f32` and `f64`; simulation state elsewhere in the crate is
/// pinned to [`crate::Real`].
pub trait Scalar: Float + FromPrimitive + core::fmt::Debug {
    /// Lossless conversion from `f64` literals used by the formulas.
    fn from_f64_lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
