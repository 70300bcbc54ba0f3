#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod graph;
pub mod isp;
pub mod math;
pub mod metrics;
pub mod ops;
pub mod profile;
pub mod real;
pub mod rng;
pub mod scene;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use error::{Error, Result, WeightError};
pub use real::Real;
pub use rng::Rng;
pub use tensor::{IntoShape, Shape, Tensor};
