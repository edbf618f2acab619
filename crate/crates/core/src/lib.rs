//! A miniature electromagnetic particle-in-cell engine.
//!
//! The numerical core is a Yee-lattice FDTD field solver, a relativistic
//! Boris pusher with linear-weighting interpolation and charge-conserving
//! current deposition. Around it sits the machinery that makes the engine
//! portable across memory layouts and parallel backends: layout-polymorphic
//! buffers ([`layout::FieldedBuffer`]), mirrored memory spaces with counted
//! copies, a scatter-reduce accumulator ([`layout::ScatterBuffer`]) and
//! cell-index particle sorting.
//!
//! Units are normalized so that `c = ε0 = μ0 = 1`.
//!
//! The real type is [`Real`]: `f64` by default, `f32` with the `single`
//! feature.

pub mod error;
pub mod fields;
pub mod grid;
pub mod layout;
pub mod particles;
pub mod sim;

pub use error::{Error, Result};

/// Floating-point type used for every field and particle quantity.
#[cfg(not(feature = "single"))]
pub type Real = f64;

/// Floating-point type used for every field and particle quantity.
#[cfg(feature = "single")]
pub type Real = f32;

/// Name of the active precision, as written in dump headers.
#[cfg(not(feature = "single"))]
pub const PRECISION: &str = "f64";

#[cfg(feature = "single")]
pub const PRECISION: &str = "f32";

/// Machine epsilon of [`Real`].
pub const MACHINE_EPSILON: Real = Real::EPSILON;

/// Returns `true` when the crate was built with 32-bit reals.
pub const fn is_single_precision() -> bool {
    cfg!(feature = "single")
}
