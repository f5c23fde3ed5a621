//! Sparse optimistic information-directed sampling for sparse linear bandits,
//! with LinUCB, ESTC and OTCS baselines, numeric lemma checks and an
//! experiment harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod env;
pub mod error;
pub mod exec;
pub mod harness;
pub mod policy;
pub mod posterior;
pub mod prior;
pub mod schedules;
pub mod soids;
pub mod surrogate;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
