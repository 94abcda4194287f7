//! Covariate-assisted partial identification of treatment-effect functionals
//! through adapted conditional optimal transport.

pub mod datagen;
pub mod discretize;
pub mod error;
pub mod estimator;
pub mod oracles;
pub mod ot;
pub mod reweight;
pub mod rng;
pub mod sample;

pub use error::{CotError, Result};
