//! Differentially private tabular data synthesis from noisy low-order marginals.

pub mod accountant;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod marginal;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod selection;
pub mod synth;
pub mod theory;

pub use error::{Error, Result};
