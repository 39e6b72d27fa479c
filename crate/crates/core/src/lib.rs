//! Risk-tolerant training on sparsely-labeled sequences.

pub mod error;
pub mod exposure;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod sampler;
pub mod seed;
pub mod tensor;
pub mod xcorr;

pub use error::{Error, Result};
pub use tensor::Tensor;
