//! Scalar abstraction for the analytic modules (queueing math, cost curves,
//! drop-lab training), generic over float width via `num-traits`.
//!
//! The event-driven network core deliberately does not use this: its clock
//! and byte counters are integers so that runs are bit-reproducible.

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating-point scalar the analytic code is generic over.
pub trait Scalar:
    Float + FromPrimitive + NumCast + std::fmt::Debug + std::fmt::Display + Default + 'static
{
    /// Lossy conversion from an `f64` literal or measurement.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
