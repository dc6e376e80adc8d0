//! Toolkit for automatic modulation classification experiments: a baseband
//! modulation simulator for ten schemes, constellation-diagram imaging with
//! an exponential-decay influence model, deterministic dataset generation,
//! and a from-scratch vision transformer with exact gradients, training,
//! and head-only fine-tuning.
//!
//! The numeric kernels are generic over the scalar type (see [`scalar::Scalar`]);
//! the pipeline defaults below fix the working precision: `f64` for signal
//! synthesis and imaging, `f32` for classifier training. Double-precision
//! instantiations back the verification oracles in the test suites.

pub mod dataset;
pub mod dsp;
pub mod imaging;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod vit;

pub use scalar::Scalar;

/// Complex baseband sample in pipeline precision.
pub type Sample = num_complex::Complex<f64>;
/// Signal frame in pipeline precision.
pub type Frame = dsp::IqSignal<f64>;
/// Intensity grid in pipeline precision.
pub type Grid = imaging::GrayGrid<f64>;
/// Trainable parameters in training precision.
pub type TrainParams = vit::ParameterSet<f32>;
/// Classifier checkpoint in training precision.
pub type TrainCheckpoint = vit::Checkpoint;
