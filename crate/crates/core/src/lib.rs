//! Framewise GAN vocoder engine.
//!
//! Waveforms are generated one 10 ms frame (160 samples at 16 kHz) per
//! 100 Hz conditioning vector by a bias-free stack of GRUs and framewise
//! convolutions, then mapped back from the perceptual training domain with
//! inverse weighting and de-emphasis.

pub mod dsp;
pub mod error;
pub mod features;
pub mod generator;
pub mod losses;
pub mod metrics;
pub mod perceptual;
pub mod signal;
pub mod sparsity;
pub mod tensor;
pub mod weights;

pub use error::{Error, Result};
