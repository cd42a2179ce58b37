//! Frame ingestion, normalization, chronological splitting and windowed
//! sample generation.

mod frms;
mod normalize;
mod samples;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use frms::{import_csv, load_framestack, read_framestack, save_framestack, write_framestack};
pub use normalize::{normalize, NormKind, NormalizationSpec};
pub use samples::{
    make_batches, make_samples, sample_windows, window_tensors, SampleSet, SampleWindow, Scheme,
};

use crate::error::{Error, Result};

/// Reservoir property carried by a frame stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Pressure,
    OilSat,
    GasSat,
    WaterSat,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Pressure,
        Property::OilSat,
        Property::GasSat,
        Property::WaterSat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Pressure => "pressure",
            Property::OilSat => "oil_sat",
            Property::GasSat => "gas_sat",
            Property::WaterSat => "water_sat",
        }
    }

    pub fn is_saturation(self) -> bool {
        self != Property::Pressure
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown property {s:?}")))
    }
}

/// Time series of 2-D maps over a masked `rows x cols` grid.
///
/// Frames are stored time-major, row-major. Inactive cells always hold 0.0.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameStack {
    property: Property,
    rows: usize,
    cols: usize,
    mask: Vec<bool>,
    frames: Vec<f32>,
}

impl FrameStack {
    /// Builds a stack; values on inactive cells are overwritten with 0.0.
    pub fn new(
        property: Property,
        rows: usize,
        cols: usize,
        mask: Vec<bool>,
        mut frames: Vec<f32>,
    ) -> Result<Self> {
        let cells = rows
            .checked_mul(cols)
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::dim(format!("invalid grid {rows}x{cols}")))?;
        if mask.len() != cells {
            return Err(Error::dim(format!(
                "mask has {} cells, grid has {cells}",
                mask.len()
            )));
        }
        if frames.len() % cells != 0 {
            return Err(Error::dim(format!(
                "{} values do not form whole {rows}x{cols} frames",
                frames.len()
            )));
        }
        for frame in frames.chunks_mut(cells) {
            for (v, &active) in frame.iter_mut().zip(&mask) {
                if !active {
                    *v = 0.0;
                }
            }
        }
        Ok(FrameStack {
            property,
            rows,
            cols,
            mask,
            frames,
        })
    }

    /// Stack with no frames on the given grid.
    pub fn empty(property: Property, rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        Self::new(property, rows, cols, mask, Vec::new())
    }

    pub fn property(&self) -> Property {
        self.property
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len() / self.cells()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let c = self.cells();
        &self.frames[t * c..(t + 1) * c]
    }

    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn iter_frames(&self) -> impl Iterator<Item = &[f32]> {
        self.frames.chunks(self.cells())
    }

    /// Values on active cells of every frame.
    pub fn active_values(&self) -> impl Iterator<Item = f32> + '_ {
        let mask = &self.mask;
        self.iter_frames()
            .flat_map(move |f| f.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v))
    }

    /// Frames `range` as a new stack.
    pub fn slice(&self, range: Range<usize>) -> Result<FrameStack> {
        if range.start > range.end || range.end > self.frame_count() {
            return Err(Error::usage(format!(
                "frame range {range:?} outside 0..{}",
                self.frame_count()
            )));
        }
        let c = self.cells();
        Ok(FrameStack {
            property: self.property,
            rows: self.rows,
            cols: self.cols,
            mask: self.mask.clone(),
            frames: self.frames[range.start * c..range.end * c].to_vec(),
        })
    }

    /// Appends one frame; inactive cells are zeroed.
    pub fn push_frame(&mut self, frame: &[f32]) -> Result<()> {
        if frame.len() != self.cells() {
            return Err(Error::dim(format!(
                "frame of {} cells pushed onto {}x{} grid",
                frame.len(),
                self.rows,
                self.cols
            )));
        }
        self.frames.extend(
            frame
                .iter()
                .zip(&self.mask)
                .map(|(&v, &m)| if m { v } else { 0.0 }),
        );
        Ok(())
    }

    /// Same grid and mask, different values.
    pub fn with_frames(&self, frames: Vec<f32>) -> Result<FrameStack> {
        FrameStack::new(
            self.property,
            self.rows,
            self.cols,
            self.mask.clone(),
            frames,
        )
    }

    pub fn same_grid(&self, other: &FrameStack) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.mask == other.mask
    }
}

/// Chronological split into the first `train_frames` frames and the rest.
pub fn split(fs: &FrameStack, train_frames: usize) -> Result<(FrameStack, FrameStack)> {
    let t = fs.frame_count();
    if train_frames == 0 || train_frames >= t {
        return Err(Error::usage(format!(
            "train frame count {train_frames} must lie strictly between 0 and {t}"
        )));
    }
    Ok((fs.slice(0..train_frames)?, fs.slice(train_frames..t)?))
}

/// Default training length: five sixths of the series, rounded.
pub fn default_train_frames(total: usize) -> usize {
    (total * 5 + 3) / 6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(t: usize) -> FrameStack {
        let mask = vec![true, false, true, true];
        let frames = (0..t * 4).map(|i| i as f32).collect();
        FrameStack::new(Property::Pressure, 2, 2, mask, frames).unwrap()
    }

    #[test]
    fn inactive_cells_are_zeroed() {
        let fs = stack(3);
        for t in 0..3 {
            assert_eq!(fs.frame(t)[1], 0.0);
        }
        assert_eq!(fs.active_count(), 3);
    }

    #[test]
    fn split_examples() {
        let fs = FrameStack::new(Property::OilSat, 1, 1, vec![true], vec![0.5; 360]).unwrap();
        let (a, b) = split(&fs, 300).unwrap();
        assert_eq!((a.frame_count(), b.frame_count()), (300, 60));
        let (_, b) = split(&fs, 359).unwrap();
        assert_eq!(b.frame_count(), 1);
        assert!(split(&fs, 0).is_err());
        assert!(split(&fs, 360).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let fs = stack(7);
        let (a, b) = split(&fs, 3).unwrap();
        let mut joined = a.frames().to_vec();
        joined.extend_from_slice(b.frames());
        assert_eq!(joined, fs.frames());
    }

    #[test]
    fn default_split_length() {
        assert_eq!(default_train_frames(360), 300);
        assert_eq!(default_train_frames(120), 100);
    }

    #[test]
    fn property_names_roundtrip() {
        for p in Property::ALL {
            assert_eq!(p.name().parse::<Property>().unwrap(), p);
        }
        assert!("porosity".parse::<Property>().is_err());
    }

    #[test]
    fn push_frame_masks() {
        let mut fs = stack(1);
        fs.push_frame(&[9.0, 9.0, 9.0, 9.0]).unwrap();
        assert_eq!(fs.frame(1), &[9.0, 0.0, 9.0, 9.0]);
        assert!(fs.push_frame(&[1.0]).is_err());
    }
}
