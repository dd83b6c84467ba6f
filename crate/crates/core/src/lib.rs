//! Analysis of piecewise-linear orientation-preserving circle homeomorphisms.
//!
//! The crate computes rotation numbers (exact rationals with periodic-point
//! witnesses, or rigorous enclosures), decides whether a map is conjugate to
//! a rigid rational rotation from the dynamics of its break points, builds the
//! piecewise-linear conjugacy and the invariant density, measures mode-locked
//! parameter intervals, and evaluates the linear rotation-number scaling
//! coefficient `R1` near conjugacy parameters.
//!
//! Everything is generic over [`Scalar`]: `f64` or exact `BigRational`.

pub mod conjugacy;
pub mod error;
pub mod families;
pub mod lift;
pub mod rotation;
pub mod scalar;
pub mod scaling;

pub use error::{Error, Result, ScalarError};
pub use lift::{JumpData, PwlLift};
pub use num_rational::BigRational;
pub use scalar::{Backend, Scalar, Tolerance};
