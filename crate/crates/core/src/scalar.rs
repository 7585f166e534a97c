//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All linear-algebra, graph and control code is written against [`Scalar`],
//! which is implemented for `f32` and `f64`. The simulator and the CLI use
//! `f64`; see the aliases at the crate root.

use std::fmt::LowerExp;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar usable by the solvers.
pub trait Scalar: RealField + Copy + ToPrimitive + LowerExp {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

}

impl Scalar for f32 {}
impl Scalar for f64 {}
