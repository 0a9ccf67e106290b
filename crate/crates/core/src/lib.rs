//! Mining unbalanced drug-combination data with a neural Thompson sampling
//! agent whose candidate actions are proposed by differential evolution.
//!
//! The crate is `no_std` (with `alloc`) so the algorithmic pieces can be
//! embedded anywhere; file formats, configuration and the command line
//! front end live in the `pipmine` companion crate.
//!
//! ## Modules
//!
//! - [`claims`]: drug combinations, the historical dataset, relative risk
//!   and Hamming 1-NN lookup.
//! - [`simgen`]: synthetic polypharmacy data with hidden dangerous patterns.
//! - [`neuralnet`]: a small ReLU regression network with explicit parameter
//!   gradients and Adam training.
//! - [`bandit`]: diagonal design matrix, predictive std and lower bounds.
//! - [`devolution`]: best/1/bin differential evolution over `{0,1}^d`.
//! - [`miner`]: the mining loop, ensemble snapshots and PIP classification.
//! - [`evalkit`]: precision/recall style metrics and the random baseline.
//!
//! ## Crate features
//!
//! - `std` (default): enables `std` support in the random number crates.
//! - `serde`: derives `Serialize`/`Deserialize` for configuration types.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bandit;
pub mod claims;
pub mod devolution;
mod error;
pub mod evalkit;
pub mod miner;
pub mod neuralnet;
pub mod simgen;

pub use error::{Error, Result};
