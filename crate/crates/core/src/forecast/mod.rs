//! Training-set prediction, autoregressive rollout and frame metrics.

mod metrics;

pub use metrics::{
    diff_map, diff_pgm, metric_series, mse, nrmse, ssim, MetricConfig, MetricRecord, MetricSeries,
    MetricSummary, SsimConfig, SsimRegion,
};

use crate::error::{Error, Result};
use crate::layers::Network;
use crate::pipeline::{sample_windows, window_tensors, FrameStack, Scheme};
use crate::tensor::{Real, Tensor};

/// Windows per forward call in [`predict_training_frames`].
const PREDICT_BATCH: usize = 16;

/// Anything that maps an input window `[B, L, M, N, 1]` to an output window
/// of the same shape.
pub trait Forecaster<T: Real> {
    fn forecast(&self, windows: &Tensor<T>) -> Result<Tensor<T>>;
}

impl<T: Real> Forecaster<T> for Network<T> {
    fn forecast(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        self.predict(windows)
    }
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityForecaster;

impl<T: Real> Forecaster<T> for IdentityForecaster {
    fn forecast(&self, windows: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(windows.clone())
    }
}

fn last_frames<T: Real>(out: &Tensor<T>, cells: usize) -> Result<Vec<Vec<f32>>> {
    let s = out.shape();
    if s.len() != 5 || s[2] * s[3] != cells || s[4] != 1 {
        return Err(Error::dim(format!("forecast output has shape {s:?}")));
    }
    let (b, l) = (s[0], s[1]);
    Ok((0..b)
        .map(|i| {
            let start = (i * l + l - 1) * cells;
            out.data()[start..start + cells]
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect()
        })
        .collect())
}

/// One-step predictions over `stack`: for every overlapping window the last
/// output frame is kept. The result has `T - window` frames, aligned with
/// frames `window..T` of the input.
pub fn predict_training_frames<T: Real>(
    model: &impl Forecaster<T>,
    stack: &FrameStack,
    window: usize,
) -> Result<FrameStack> {
    let samples = sample_windows(stack.frame_count(), window, Scheme::Overlapping, 1)?;
    if samples.is_empty() {
        return Err(Error::usage(format!(
            "{} frames are too few for window {window}",
            stack.frame_count()
        )));
    }
    let mut out = FrameStack::empty(stack.property(), stack.rows(), stack.cols(), stack.mask().to_vec())?;
    for chunk in samples.samples.chunks(PREDICT_BATCH) {
        let ranges: Vec<_> = chunk.iter().map(|s| s.input.clone()).collect();
        let x = window_tensors::<T>(stack, &ranges)?;
        for frame in last_frames(&model.forecast(&x)?, stack.cells())? {
            out.push_frame(&frame)?;
        }
    }
    Ok(out)
}

/// Blind autoregressive forecast of `horizon` frames from the `window`
/// frames of `seed`. Each predicted frame is appended to the input window and
/// the oldest frame dropped, so after `window` steps the inputs are entirely
/// predicted.
pub fn rollout<T: Real>(
    model: &impl Forecaster<T>,
    seed: &FrameStack,
    horizon: usize,
) -> Result<FrameStack> {
    let window = seed.frame_count();
    if window == 0 {
        return Err(Error::usage("rollout needs a non-empty seed window"));
    }
    let mut out = FrameStack::empty(seed.property(), seed.rows(), seed.cols(), seed.mask().to_vec())?;
    let mut history = seed.clone();
    for _ in 0..horizon {
        let n = history.frame_count();
        let x = window_tensors::<T>(&history, &[n - window..n])?;
        let frame = last_frames(&model.forecast(&x)?, seed.cells())?.remove(0);
        out.push_frame(&frame)?;
        history.push_frame(&frame)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{CellKind, NetworkSpec};
    use crate::pipeline::Property;

    fn stack(t: usize) -> FrameStack {
        let frames = (0..t * 6).map(|i| 0.1 + (i as f32) * 0.01).collect();
        FrameStack::new(Property::OilSat, 2, 3, vec![true, true, false, true, true, true], frames)
            .unwrap()
    }

    #[test]
    fn identity_prediction_lags_one_frame() {
        let fs = stack(13);
        let pred = predict_training_frames::<f32>(&IdentityForecaster, &fs, 4).unwrap();
        assert_eq!(pred.frame_count(), 9);
        for t in 4..13 {
            assert_eq!(pred.frame(t - 4), fs.frame(t - 1));
        }
    }

    #[test]
    fn identity_rollout_is_constant() {
        let fs = stack(3);
        let out = rollout::<f64>(&IdentityForecaster, &fs, 7).unwrap();
        assert_eq!(out.frame_count(), 7);
        for f in out.iter_frames() {
            assert_eq!(f, fs.frame(2));
        }
        assert_eq!(rollout::<f64>(&IdentityForecaster, &fs, 0).unwrap().frame_count(), 0);
    }

    #[test]
    fn network_predictions_in_unit_interval() {
        let spec = NetworkSpec::stacked(CellKind::Convlstm, &[2], 3, 2).unwrap();
        let net = Network::<f32>::init(spec, 3).unwrap();
        let fs = stack(8);
        let out = rollout(&net, &fs.slice(0..3).unwrap(), 5).unwrap();
        assert_eq!(out.frame_count(), 5);
        assert!(out.active_values().all(|v| v > 0.0 && v < 1.0));
        let pred = predict_training_frames(&net, &fs, 3).unwrap();
        assert_eq!(pred.frame_count(), 5);
    }

    #[test]
    fn too_short_series() {
        assert!(predict_training_frames::<f32>(&IdentityForecaster, &stack(4), 4).is_err());
    }
}
