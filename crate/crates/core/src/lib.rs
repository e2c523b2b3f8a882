//! Spiking-pattern classification with a neuron with nonlinear dendrites.
//!
//! The crate implements the full pipeline: a shared PSP kernel, spike
//! pattern datasets, the NNLD forward model, structural (morphological)
//! learning with threshold adaptation, a weight-based tempotron baseline
//! with optional weight quantization, an analog-to-spike encoder, and an
//! experiment harness that runs seeded multi-trial benchmarks.

// Validation guards use `!(x > 0.0)` so NaN takes the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod learning;
pub mod neuron;
pub mod tempotron;

pub use error::{Error, Result};
