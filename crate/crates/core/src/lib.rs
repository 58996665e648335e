//! Discrete Lehmann representation of imaginary-time Green's functions.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dlr;
pub mod error;
pub mod grids;
pub mod imtime;
pub mod ir;
pub mod kernel;
pub mod lowrank;
pub mod quadrature;
pub mod syk;

pub use error::{Error, Result};
