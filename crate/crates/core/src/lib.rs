//! Lebesgue-preserving expanding Markov maps of the real line: construction, transfer
//! operators, infinite-volume observables and mixing diagnostics.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod config;
pub mod error;
pub mod maps;
pub mod mixing;
pub mod observables;
pub mod orbits;
pub mod quad;
pub mod transfer;

pub use error::{Error, Result};
