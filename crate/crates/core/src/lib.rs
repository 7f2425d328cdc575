//! Injury detection from pitch video: synthetic corpus generation, dense
//! optical flow, a small 3D CNN trained by hand-written backpropagation,
//! evaluation protocols, bias probes and a reproducible command-line pipeline.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod metrics;
pub mod model;
pub mod protocols;
pub mod seed;
pub mod tensor_file;
pub mod video;

pub use error::{Error, Result};
