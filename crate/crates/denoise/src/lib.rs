//! Standard-library companion to `denoise-core`: image and model files,
//! datasets, training history, benchmarking and the `denoise` command.

pub mod bench;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod history;
pub mod image;
pub mod model;

pub use error::{Error, Result};
