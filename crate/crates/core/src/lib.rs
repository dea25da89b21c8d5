//! DOME activation functions and the machinery around them.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a small dense row-major `f64` array with matmul, convolution,
//!   elementwise and reduction kernels.
//! - [`activations`]: DOME, penalized DOME and multi-class DOME with exact
//!   analytic derivatives, regular-simplex reference points, normalization
//!   and the logit surrogates used by adaptive attacks.
//! - [`network`]: layers, forward/backward with penultimate-embedding
//!   capture, losses and the `DOME1` checkpoint format.
//! - [`training`]: SGD with momentum, a triangular cyclic learning rate and
//!   fast adversarial training.
//! - [`attacks`]: FGSM, PGD with random restarts and adaptive-loss
//!   evaluation for multi-class DOME heads.
//! - [`analysis`]: intra/inter-class distance distributions, Jensen-Shannon
//!   divergence, KDE likelihoods and compactness summaries.
//! - [`data`] and [`experiment`]: IDX ingestion, synthetic blobs and the
//!   declarative experiment runner behind the `dome` binary.

pub mod activations;
pub mod analysis;
pub mod attacks;
pub mod data;
pub mod error;
pub mod experiment;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
