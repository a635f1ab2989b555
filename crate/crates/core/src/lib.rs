pub mod cli;
pub mod codec;
pub mod data;
pub mod dsp;
pub mod eval;
pub mod error;
pub mod model;
pub mod online;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
