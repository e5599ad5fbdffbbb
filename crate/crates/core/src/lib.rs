//! Core library for JPEG compression-count forensics: a baseline JFIF
//! codec with quantized-DCT access, recompression-chain dataset
//! generation, sub-band histogram features, a small 1-D convolutional
//! network, and the evaluation pipeline that ties them together.

pub mod chains;
pub mod error;
pub mod features;
pub mod jpeg;
pub mod nn;
pub mod pipeline;
pub mod ppm;
pub mod synth;

pub use error::{Error, Result};
