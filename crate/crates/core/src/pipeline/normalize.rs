use serde::{Deserialize, Serialize};

use super::{FrameStack, Property};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Minmax,
    Identity,
}

/// Value transform between physical units and the `[0, 1]` training range.
/// Pressure uses min-max scaling; saturations are already fractions and
/// pass through unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub property: Property,
    pub kind: NormKind,
    pub min: f64,
    pub max: f64,
}

impl NormalizationSpec {
    pub fn identity(property: Property) -> Self {
        NormalizationSpec {
            property,
            kind: NormKind::Identity,
            min: 0.0,
            max: 1.0,
        }
    }

    /// Fits on the active cells of `train` (pass only the training portion).
    pub fn fit(train: &FrameStack) -> Result<Self> {
        let property = train.property();
        if property.is_saturation() {
            return Ok(Self::identity(property));
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in train.active_values() {
            min = min.min(v as f64);
            max = max.max(v as f64);
        }
        if !(max > min) {
            return Err(Error::DegenerateRange { min, max });
        }
        Ok(NormalizationSpec {
            property,
            kind: NormKind::Minmax,
            min,
            max,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NormKind::Minmax && !(self.max > self.min) {
            return Err(Error::DegenerateRange {
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }

    fn check(&self, fs: &FrameStack) -> Result<()> {
        if fs.property() != self.property {
            return Err(Error::usage(format!(
                "normalization for {} applied to {}",
                self.property,
                fs.property()
            )));
        }
        self.validate()
    }

    pub fn normalize_value(&self, v: f32) -> f32 {
        match self.kind {
            NormKind::Identity => v,
            NormKind::Minmax => ((v as f64 - self.min) / (self.max - self.min)) as f32,
        }
    }

    pub fn denormalize_value(&self, v: f32) -> f32 {
        match self.kind {
            NormKind::Identity => v,
            NormKind::Minmax => (v as f64 * (self.max - self.min) + self.min) as f32,
        }
    }

    pub fn apply(&self, fs: &FrameStack) -> Result<FrameStack> {
        self.check(fs)?;
        fs.with_frames(fs.frames().iter().map(|&v| self.normalize_value(v)).collect())
    }

    pub fn invert(&self, fs: &FrameStack) -> Result<FrameStack> {
        self.check(fs)?;
        fs.with_frames(fs.frames().iter().map(|&v| self.denormalize_value(v)).collect())
    }
}

/// Fits on `fs` itself and applies the transform.
pub fn normalize(fs: &FrameStack) -> Result<(FrameStack, NormalizationSpec)> {
    let spec = NormalizationSpec::fit(fs)?;
    Ok((spec.apply(fs)?, spec))
}
