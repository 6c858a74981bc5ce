//! Numerical laboratory for thin obstacle, two-membrane and one-phase free
//! boundary problems in the plane.

// `!(a > b)` is how NaN gets rejected throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beltrami;
pub mod constructor;
pub mod error;
pub mod frequency;
pub mod grid;
pub mod hodograph;
pub mod io;
pub mod nonlinearity;
pub mod obstacle;
pub mod quad;
pub mod scenario;

pub use error::{Error, Result};
pub use grid::{GridSpec, IntervalSet, MatrixField, ScalarField};
