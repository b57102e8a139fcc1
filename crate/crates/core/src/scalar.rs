//! Numeric abstractions shared by the metric and clustering kernels.
//!
//! Kernels that only need field arithmetic (Gini, Jaccard) are written against
//! [`Scalar`], so they run on `f32`, `f64` and exact rationals alike. Kernels
//! that need logarithms or square roots use [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like scalar: floats or exact rationals.
pub trait Scalar: Num + Signed + Copy + PartialOrd + FromPrimitive + Debug {
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl<T> Scalar for T where T: Num + Signed + Copy + PartialOrd + FromPrimitive + Debug {}

/// Floating-point scalar for kernels needing transcendental functions.
pub trait Real: Scalar + Float + ToPrimitive + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable")
    }
}

impl<T> Real for T where T: Scalar + Float + ToPrimitive + Send + Sync + 'static {}
