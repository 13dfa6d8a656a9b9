//! EEG phase-connectivity graph sequences, a GAT + BiGRU subject classifier,
//! and the evaluation and attribution tooling around it.

pub mod config;
pub mod connectivity;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod features;
pub mod matrix;
pub mod montage;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
