//! File formats, multi-seed experiment harness and command implementations
//! on top of [`pipmine_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod manifest;
pub mod plot;

pub use error::{CliError, Result};
pub use pipmine_core;
