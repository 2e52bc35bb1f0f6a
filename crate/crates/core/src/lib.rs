//! Spiking deep neural networks: spike tensors, filters, coding, IF layers,
//! STDP/R-STDP learning, a sparse event backend and a training pipeline.

pub mod coding;
pub mod config;
pub mod error;
pub mod filters;
pub mod layers;
pub mod learning;
pub mod mnist;
pub mod network;
pub mod pipeline;
pub mod readout;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DynTensor, ElementKind, Potentials, Shape5, Spikes, Tensor};
