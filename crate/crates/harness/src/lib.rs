//! Command-line driver for `cot-pi`: estimation on CSV data, synthetic
//! draws, cell-constant selection, and Monte-Carlo benchmarks.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod input;

pub use error::{HarnessError, Result};
