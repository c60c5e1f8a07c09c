pub mod degradation;
pub mod cli;
pub mod denoiser;
mod error;
pub mod evalblend;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod signal;
pub mod variance;

pub use error::{Error, Result};
