//! Certified frequency-domain model reduction of parametric LTI systems.
//!
//! The pipeline: describe a parametric LTI system with affine operators,
//! train a stability-factor lower bound (successive constraint method or its
//! natural-norm variant), build a reduced basis by a weak greedy loop driven
//! by a residual-based error estimator, realify the complex basis by POD
//! truncation, and verify the resulting reduced model against the full one
//! in both frequency and time domain.

pub mod affine;
pub mod banded;
pub mod dense;
pub mod eig;
pub mod error;
pub mod fom;
pub mod greedy;
pub mod io;
pub mod lp;
pub mod param;
pub mod realify;
pub mod sparse;
pub mod stability;
pub mod verify;

pub use error::{Error, Result};
