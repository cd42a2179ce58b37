//! Recurrent and convolutional layers and the stacked forecasting network.

mod batchnorm;
mod conv3d;
mod convlstm;
mod network;
mod stlstm;

pub use batchnorm::{BatchNorm, NormMode};
pub use conv3d::Conv3d;
pub use convlstm::{ConvLstmCell, ConvLstmState};
pub use network::{
    param_count, CellKind, ForwardPass, LayerConfig, LayerCount, Network, NetworkSpec,
    ParamCount,
};
pub use stlstm::{StLstmCell, StLstmState};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Real, Tensor};

/// Glorot-uniform kernel `[c_out, c_in, k...]`; fans include the receptive field.
pub(crate) fn glorot<T: Real>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<T> {
    let receptive: usize = shape[2..].iter().product();
    let fan_in = shape[1] * receptive;
    let fan_out = shape[0] * receptive;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64_lossy(rng.gen_range(-limit..=limit)))
}
