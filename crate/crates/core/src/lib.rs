#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod data;
pub mod error;
pub mod graph;
pub mod infer;
pub mod kernels;
pub mod label;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::{Real, Tensor};
