//! Diffusion-transformer generative modelling for cells × genes expression
//! matrices.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the numeric
//! engine (dense tensors with reverse-mode differentiation), the expression
//! preprocessing transforms, the noise schedule, the DiT noise predictor, the
//! training loop, the DDPM/DDIM samplers, two-sample metrics, and a
//! zero-inflated synthetic data generator. File formats and the command line
//! live in the `scdiff` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod denoiser;
mod error;
pub(crate) mod math;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod synthdata;
pub mod tensor;
pub mod trainer;

pub use dataset::{ExpressionMatrix, PreprocessSpec};
pub use denoiser::{DenoiserConfig, DenoiserModel};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use rng::Rng;
pub use sampler::{Method, SampleRequest, TauSchedule};
pub use schedule::NoiseSchedule;
pub use synthdata::GeneratorSpec;
pub use tensor::{Graph, Tensor, Var};
pub use trainer::{TrainConfig, TrainState, Trainer};
