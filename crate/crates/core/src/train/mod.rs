//! Masked MSE loss, Nadam optimization, the training loop and checkpoints.

mod checkpoint;
mod nadam;

pub use checkpoint::{read_checkpoint, Checkpoint};
pub use nadam::{NadamConfig, NadamState};

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::layers::{Network, NormMode};
use crate::pipeline::{make_batches, window_tensors, FrameStack, SampleSet};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let n = NadamConfig::default();
        TrainConfig {
            epochs: 30,
            batch: 5,
            lr: n.lr,
            beta1: n.beta1,
            beta2: n.beta2,
            epsilon: n.epsilon,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn nadam(&self) -> NadamConfig {
        NadamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::config("epochs and batch size must be at least 1"));
        }
        self.nadam().validate()
    }
}

/// Mean squared error over the active cells of every frame.
///
/// `mask` covers one `M x N` frame and is broadcast over all leading axes.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, mask: &[bool]) -> Result<T> {
    let mut g = Graph::new();
    let p = g.constant(pred.clone());
    let loss = g.masked_mse(p, truth, mask)?;
    g.value(loss).item()
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains `net` in place on `samples` drawn from the normalized stack `data`.
///
/// Returns the sample-weighted mean loss of each epoch. `on_epoch` is called
/// after every epoch with its index and mean loss.
pub fn train_with<T: Real>(
    net: &mut Network<T>,
    data: &FrameStack,
    samples: &SampleSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::usage("no training samples"));
    }
    let lengths: Vec<usize> = net.trainable().iter().map(|t| t.len()).collect();
    let mut opt = NadamState::<T>::new(config.nadam(), &lengths);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batches = make_batches(samples, config.batch, epoch_seed(config.seed, epoch))?;
        let (mut sum, mut count) = (0.0f64, 0usize);
        for (bi, batch) in batches.iter().enumerate() {
            let inputs: Vec<_> = batch.iter().map(|&i| samples.samples[i].input.clone()).collect();
            let outputs: Vec<_> = batch.iter().map(|&i| samples.samples[i].output.clone()).collect();
            let x = window_tensors::<T>(data, &inputs)?;
            let y = window_tensors::<T>(data, &outputs)?;

            let mut g = Graph::new();
            let xv = g.constant(x);
            let (pass, params) = net.forward(&mut g, xv, NormMode::Train, true)?;
            let loss = g.masked_mse(pass.output, &y, data.mask())?;
            let value = g.value(loss).item()?.as_f64();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {value} at epoch {}, batch {}",
                    epoch + 1,
                    bi + 1
                )));
            }
            let mut grads = g.backward(loss)?;
            let trainable: Vec<Tensor<T>> = net
                .parameters()
                .iter()
                .zip(&params)
                .filter(|((_, tr), _)| *tr)
                .map(|(_, &v)| grads.take(v).expect("trainable parameter has a gradient"))
                .collect();
            let grad_refs: Vec<&Tensor<T>> = trainable.iter().collect();
            opt.step(&mut net.trainable_mut(), &grad_refs).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("{msg} (epoch {}, batch {})", epoch + 1, bi + 1))
                }
                other => other,
            })?;
            net.update_moving_stats(&pass.batch_stats);

            sum += value * batch.len() as f64;
            count += batch.len();
        }
        let mean = sum / count as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(history)
}

pub fn train<T: Real>(
    net: &mut Network<T>,
    data: &FrameStack,
    samples: &SampleSet,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    train_with(net, data, samples, config, |_, _| {})
}
