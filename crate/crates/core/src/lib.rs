//! Physics-informed neural networks for one-dimensional advection problems
//! with discontinuous initial and boundary data.

// `!(a < b)` is used deliberately so that NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffcore;
pub mod error;
pub mod experiment;
pub mod expr;
pub mod losses;
pub mod model;
pub mod postprocess;
pub mod problems;
pub mod reference;
pub mod training;

pub use error::{Error, Result};
