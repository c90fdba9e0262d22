//! Quantum information geometry of small density-matrix families: monotone and
//! Hilbert-Schmidt metrics, separability volumes and prior comparisons.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod error;
pub mod husimi;
pub mod linalg;
pub mod metric;
pub mod priors;
pub mod quadrature;
pub mod region;
pub mod report;
pub mod state;

pub use error::{Error, Result};
