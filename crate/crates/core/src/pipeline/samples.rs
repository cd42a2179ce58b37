use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FrameStack;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Output window is the input window shifted one frame forward.
    Overlapping,
    /// Output window starts right after the input window ends.
    Nonoverlapping,
}

/// Frame index ranges of one input/output pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleWindow {
    pub input: Range<usize>,
    pub output: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    pub scheme: Scheme,
    pub window: usize,
    pub stride: usize,
    pub samples: Vec<SampleWindow>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// True when the series is too short for even one sample.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Windows over a series of `frame_count` frames, starting every `stride`
/// frames. Too-short series give an empty set, not an error.
pub fn sample_windows(
    frame_count: usize,
    window: usize,
    scheme: Scheme,
    stride: usize,
) -> Result<SampleSet> {
    if window == 0 || stride == 0 {
        return Err(Error::usage(format!(
            "window ({window}) and stride ({stride}) must be positive"
        )));
    }
    let span = match scheme {
        Scheme::Overlapping => window + 1,
        Scheme::Nonoverlapping => 2 * window,
    };
    let shift = match scheme {
        Scheme::Overlapping => 1,
        Scheme::Nonoverlapping => window,
    };
    let samples = if frame_count < span {
        Vec::new()
    } else {
        (0..=frame_count - span)
            .step_by(stride)
            .map(|i| SampleWindow {
                input: i..i + window,
                output: i + shift..i + shift + window,
            })
            .collect()
    };
    Ok(SampleSet {
        scheme,
        window,
        stride,
        samples,
    })
}

/// Stride-1 windows over `fs`.
pub fn make_samples(fs: &FrameStack, window: usize, scheme: Scheme) -> Result<SampleSet> {
    sample_windows(fs.frame_count(), window, scheme, 1)
}

/// Shuffles sample indices with `seed` and cuts them into batches of
/// `batch`; the last batch keeps the remainder.
pub fn make_batches(ss: &SampleSet, batch: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch == 0 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..ss.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order.chunks(batch).map(<[usize]>::to_vec).collect())
}

/// Stacks the frames of the given frame-index ranges into `[B, L, M, N, 1]`.
pub fn window_tensors<T: Real>(fs: &FrameStack, ranges: &[Range<usize>]) -> Result<Tensor<T>> {
    let first = ranges
        .first()
        .ok_or_else(|| Error::usage("no windows to stack"))?;
    let len = first.len();
    if len == 0 || ranges.iter().any(|r| r.len() != len || r.end > fs.frame_count()) {
        return Err(Error::usage("windows must share a non-zero length within the stack"));
    }
    let mut data = Vec::with_capacity(ranges.len() * len * fs.cells());
    for r in ranges {
        for t in r.clone() {
            data.extend(fs.frame(t).iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
    }
    Tensor::new(vec![ranges.len(), len, fs.rows(), fs.cols(), 1], data)
}
