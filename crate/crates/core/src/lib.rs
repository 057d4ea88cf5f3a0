//! Projection-and-rescaling solver for the pair of conic feasibility problems
//! `x in ker(A) ∩ R^n_+` and `x_hat in Im(A^T) ∩ R^n_+`, with instance generators,
//! verification oracles and a batch benchmark harness.

// `!(x > 0.0)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basic;
pub mod bench;
pub mod epra;
mod error;
pub mod instances;
mod json;
pub mod matrix;
pub mod oracle;
pub mod subspace;

pub use basic::{BpConfig, BpOutcome, BpStatus, Scheme};
pub use epra::{solve, EpraConfig, EpraResult, EpraStatus, RescaleMode};
pub use error::{Error, Result};
pub use instances::{Family, GenSpec};
pub use matrix::DenseMatrix;
pub use oracle::VerificationReport;
pub use subspace::{Instance, KnownDelta, Meta, Partition};
