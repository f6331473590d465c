//! Files, checkpoints, training runs, evaluation, the HTTP service and the
//! command line on top of `dlgan-core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod imageio;
pub mod run;
pub mod service;

pub use error::{AppError, Result};
