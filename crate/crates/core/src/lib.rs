//! Text classification with spiking neural networks: a tailored TextCNN is
//! trained conventionally, converted to leaky integrate-and-fire neurons, and
//! fine-tuned with surrogate gradients.

pub mod ann;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod encoder;
pub mod energy;
pub mod error;
pub mod eval;
pub mod optim;
pub mod pipeline;
pub mod real;
pub mod rng;
pub mod snn;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
