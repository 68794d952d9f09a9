//! Sign-constrained (non-negative) least squares for high-dimensional regression.
//!
//! The crate provides NNLS solvers, certified checks of the design conditions
//! under which NNLS recovers sparse coefficient vectors, closed-form error
//! bounds, and a network-tomography simulation study.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod conditions;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod nnls;
pub mod tomography;

pub use error::{Error, Result};
