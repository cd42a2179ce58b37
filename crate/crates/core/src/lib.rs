//! Spatio-temporal forecasting of masked 2-D property maps with stacked
//! convolutional LSTMs.
//!
//! The crate covers the whole pipeline: frame ingestion and windowed sample
//! generation ([`pipeline`]), a reverse-mode autodiff tensor core
//! ([`autodiff`]), the recurrent layers and network ([`layers`]), Nadam
//! training with checkpointing ([`train`]), autoregressive rollout and frame
//! metrics ([`forecast`]), and a synthetic data generator ([`synth`]).

pub mod autodiff;
mod conv;
pub mod error;
pub mod forecast;
pub mod gradcheck;
pub mod layers;
pub mod pipeline;
pub mod synth;
pub mod tensor;
pub mod train;

pub use autodiff::{Activation, Graph, Var};
pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
