//! Multi-modal pedestrian trajectory sampling with a conditional Info-GAN.
//!
//! The crate covers the whole pipeline: trajectory ingestion and the toy
//! benchmark ([`datasets`]), hand-designed interaction features
//! ([`interaction`]), the attention-pooling generator and its discriminator
//! ([`model`]), the adversarial training regimes ([`training`]), the
//! constant-velocity baseline ([`baselines`]) and accuracy and
//! distribution-quality metrics ([`evaluation`]).

pub mod baselines;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod interaction;
pub mod io;
pub mod kv;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, ErrorClass, Result};
