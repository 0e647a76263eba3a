//! Lossless text compression with an arithmetic coder driven by pluggable
//! next-token predictors, plus corpus analysis and a benchmark harness.

pub mod analysis;
#[cfg(feature = "bench")]
pub mod bench;
pub mod coder;
pub mod container;
pub mod model;
pub mod predictors;
pub mod protocol;
pub mod synth;
