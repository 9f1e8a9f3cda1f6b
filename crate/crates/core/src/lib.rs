pub mod baselines;
pub mod cli;
pub mod data;
pub mod detector;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pseudo_label;
pub mod selector;
pub mod synth;
pub mod text;
pub mod train;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
