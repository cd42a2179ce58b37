use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::FrameStack;

/// Which cells enter the SSIM statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimRegion {
    /// Active cells only.
    #[default]
    Active,
    /// The whole rectangle, inactive cells counted as zeros.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub c1: f64,
    pub c2: f64,
    pub region: SsimRegion,
}

impl SsimConfig {
    /// `c1 = (0.01 r)^2`, `c2 = (0.03 r)^2` for data range `r`.
    pub fn for_range(range: f64) -> Self {
        SsimConfig {
            c1: (0.01 * range).powi(2),
            c2: (0.03 * range).powi(2),
            region: SsimRegion::Active,
        }
    }
}

fn check_frames(x: &[f32], y: &[f32], mask: &[bool]) -> Result<()> {
    if x.len() != y.len() || x.len() != mask.len() {
        return Err(Error::dim(format!(
            "frames of {} and {} cells with a mask of {}",
            x.len(),
            y.len(),
            mask.len()
        )));
    }
    Ok(())
}

fn selected<'a>(
    x: &'a [f32],
    y: &'a [f32],
    mask: &'a [bool],
    region: SsimRegion,
) -> impl Iterator<Item = (f64, f64)> + Clone + 'a {
    x.iter()
        .zip(y)
        .zip(mask)
        .filter(move |(_, &m)| m || region == SsimRegion::Full)
        .map(|((&a, &b), _)| (a as f64, b as f64))
}

/// Global SSIM from frame means, sample variances and covariance (`N - 1`
/// divisor), no sliding window.
pub fn ssim(x: &[f32], y: &[f32], mask: &[bool], cfg: &SsimConfig) -> Result<f64> {
    check_frames(x, y, mask)?;
    if !(cfg.c1 > 0.0 && cfg.c2 > 0.0) {
        return Err(Error::config(format!(
            "SSIM constants must be positive, got c1={} c2={}",
            cfg.c1, cfg.c2
        )));
    }
    let cells = selected(x, y, mask, cfg.region);
    let n = cells.clone().count();
    if n < 2 {
        return Err(Error::usage(format!("SSIM needs at least 2 cells, got {n}")));
    }
    let nf = n as f64;
    let (sx, sy) = cells.clone().fold((0.0, 0.0), |(a, b), (u, v)| (a + u, b + v));
    let (mx, my) = (sx / nf, sy / nf);
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (u, v) in cells {
        let (du, dv) = (u - mx, v - my);
        vx += du * du;
        vy += dv * dv;
        cov += du * dv;
    }
    let d = nf - 1.0;
    let (vx, vy, cov) = (vx / d, vy / d, cov / d);
    Ok(((2.0 * mx * my + cfg.c1) * (2.0 * cov + cfg.c2))
        / ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2)))
}

/// Mean squared error over active cells.
pub fn mse(pred: &[f32], truth: &[f32], mask: &[bool]) -> Result<f64> {
    check_frames(pred, truth, mask)?;
    let cells = selected(pred, truth, mask, SsimRegion::Active);
    let n = cells.clone().count();
    if n == 0 {
        return Err(Error::usage("no active cells"));
    }
    Ok(cells.map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64)
}

/// `100 * sqrt(MSE) / (max - min)`, in percent.
pub fn nrmse(pred: &[f32], truth: &[f32], mask: &[bool], min: f64, max: f64) -> Result<f64> {
    if !(max > min) {
        return Err(Error::DegenerateRange { min, max });
    }
    Ok(100.0 * mse(pred, truth, mask)?.sqrt() / (max - min))
}

/// `pred - truth` on active cells, `None` on inactive ones.
pub fn diff_map(pred: &[f32], truth: &[f32], mask: &[bool]) -> Result<Vec<Option<f32>>> {
    check_frames(pred, truth, mask)?;
    Ok(pred
        .iter()
        .zip(truth)
        .zip(mask)
        .map(|((&p, &t), &m)| m.then_some(p - t))
        .collect())
}

/// Binary PGM (P5) of a difference map.
///
/// Gray level `128 + round(127 * d / scale)`, so zero is 128, `+scale` is 255
/// and `-scale` is 1. Inactive cells are 0. A zero `scale` maps every active
/// cell to 128.
pub fn diff_pgm(diff: &[Option<f32>], rows: usize, cols: usize, scale: f64) -> Result<Vec<u8>> {
    if diff.len() != rows * cols {
        return Err(Error::dim(format!(
            "{} cells for a {rows}x{cols} map",
            diff.len()
        )));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(diff.iter().map(|d| match d {
        None => 0,
        Some(_) if !(scale > 0.0) => 128,
        Some(v) => (128.0 + (127.0 * *v as f64 / scale).round()).clamp(1.0, 255.0) as u8,
    }));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub frame: usize,
    pub mse: f64,
    pub rmse: f64,
    pub nrmse_pct: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Overrides for the SSIM constants; derived from the truth range if unset.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub region: SsimRegion,
    /// Index reported for the first frame.
    pub first_frame: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub records: Vec<MetricRecord>,
    /// Whether values were in physical units.
    pub denormalized: bool,
    /// Truth range used for NRMSE and the default SSIM constants.
    pub range: (f64, f64),
    pub ssim: SsimConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub frames: usize,
    pub head: usize,
    pub head_ssim: f64,
    pub head_nrmse_pct: f64,
    pub mean_ssim: f64,
    pub mean_nrmse_pct: f64,
}

impl MetricSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,mse,rmse,nrmse_pct,ssim\n");
        for r in &self.records {
            writeln!(s, "{},{},{},{},{}", r.frame, r.mse, r.rmse, r.nrmse_pct, r.ssim)
                .expect("writing to a String");
        }
        s
    }

    /// Means over the first `head` frames and over the whole series.
    pub fn summary(&self, head: usize) -> MetricSummary {
        let mean = |rs: &[MetricRecord], f: fn(&MetricRecord) -> f64| {
            if rs.is_empty() {
                f64::NAN
            } else {
                rs.iter().map(f).sum::<f64>() / rs.len() as f64
            }
        };
        let h = &self.records[..head.min(self.records.len())];
        MetricSummary {
            frames: self.records.len(),
            head: h.len(),
            head_ssim: mean(h, |r| r.ssim),
            head_nrmse_pct: mean(h, |r| r.nrmse_pct),
            mean_ssim: mean(&self.records, |r| r.ssim),
            mean_nrmse_pct: mean(&self.records, |r| r.nrmse_pct),
        }
    }
}

/// Per-frame metrics of `pred` against `truth`. Both stacks should be in
/// physical units; the NRMSE range is taken over the active cells of `truth`.
pub fn metric_series(pred: &FrameStack, truth: &FrameStack, cfg: &MetricConfig) -> Result<MetricSeries> {
    if pred.frame_count() != truth.frame_count() {
        return Err(Error::usage(format!(
            "{} predicted frames against {} truth frames",
            pred.frame_count(),
            truth.frame_count()
        )));
    }
    if !pred.same_grid(truth) || pred.property() != truth.property() {
        return Err(Error::usage("prediction and truth differ in property, grid or mask"));
    }
    let (min, max) = truth
        .active_values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if !(max > min) {
        return Err(Error::DegenerateRange { min, max });
    }
    let default = SsimConfig::for_range(max - min);
    let ssim_cfg = SsimConfig {
        c1: cfg.c1.unwrap_or(default.c1),
        c2: cfg.c2.unwrap_or(default.c2),
        region: cfg.region,
    };
    let mask = truth.mask();
    let records = (0..truth.frame_count())
        .into_par_iter()
        .map(|t| {
            let (p, y) = (pred.frame(t), truth.frame(t));
            let m = mse(p, y, mask)?;
            Ok(MetricRecord {
                frame: cfg.first_frame + t,
                mse: m,
                rmse: m.sqrt(),
                nrmse_pct: nrmse(p, y, mask, min, max)?,
                ssim: ssim(p, y, mask, &ssim_cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricSeries {
        records,
        denormalized: true,
        range: (min, max),
        ssim: ssim_cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Property;

    const UNIT: SsimConfig = SsimConfig {
        c1: 1e-4,
        c2: 9e-4,
        region: SsimRegion::Active,
    };

    #[test]
    fn ssim_constant_frames() {
        let x = [0.0f32; 4];
        let y = [1.0f32; 4];
        let v = ssim(&x, &y, &[true; 4], &UNIT).unwrap();
        assert!((v - 1e-4 / 1.0001).abs() < 1e-15, "{v}");
    }

    #[test]
    fn ssim_self_and_symmetry() {
        let x = [0.2f32, 0.9, 0.4, 0.1, 0.7];
        let y = [0.3f32, 0.5, 0.5, 0.0, 0.9];
        let m = [true, true, false, true, true];
        assert!((ssim(&x, &x, &m, &UNIT).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ssim(&x, &y, &m, &UNIT).unwrap(), ssim(&y, &x, &m, &UNIT).unwrap());
    }

    #[test]
    fn ssim_needs_two_cells() {
        let m = [true, false, false];
        assert!(matches!(
            ssim(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &m, &UNIT),
            Err(Error::Usage(_))
        ));
        let full = SsimConfig {
            region: SsimRegion::Full,
            ..UNIT
        };
        assert!(ssim(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &m, &full).is_ok());
    }

    #[test]
    fn nrmse_examples() {
        let truth = [0.0f32; 4];
        let pred = [2.0f32; 4];
        let m = [true; 4];
        assert_eq!(nrmse(&pred, &truth, &m, 0.0, 10.0).unwrap(), 20.0);
        assert_eq!(nrmse(&truth, &truth, &m, 0.0, 10.0).unwrap(), 0.0);
        assert!(matches!(
            nrmse(&pred, &truth, &m, 3.0, 3.0),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn diff_and_pgm() {
        let m = [true, false, true];
        let d = diff_map(&[1.0, 5.0, 0.5], &[0.5, 1.0, 1.0], &m).unwrap();
        assert_eq!(d, vec![Some(0.5), None, Some(-0.5)]);
        let pgm = diff_pgm(&d, 1, 3, 0.5).unwrap();
        assert!(pgm.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&pgm[pgm.len() - 3..], &[255, 0, 1]);
        let zero = diff_pgm(&[Some(0.0), None], 2, 1, 0.0).unwrap();
        assert_eq!(&zero[zero.len() - 2..], &[128, 0]);
    }

    #[test]
    fn series_of_identical_stacks() {
        let frames: Vec<f32> = (0..3 * 4).map(|i| 1000.0 + (i * i) as f32).collect();
        let fs = FrameStack::new(Property::Pressure, 2, 2, vec![true, true, true, false], frames)
            .unwrap();
        let s = metric_series(&fs, &fs, &MetricConfig::default()).unwrap();
        assert_eq!(s.records.len(), 3);
        for r in &s.records {
            assert_eq!((r.mse, r.nrmse_pct), (0.0, 0.0));
            assert!((r.ssim - 1.0).abs() < 1e-12);
        }
        let sum = s.summary(12);
        assert_eq!((sum.head, sum.frames), (3, 3));
        assert!(s.to_csv().starts_with("frame,mse,rmse,nrmse_pct,ssim\n0,0,0,0,"));
        let short = fs.slice(0..2).unwrap();
        assert!(metric_series(&short, &fs, &MetricConfig::default()).is_err());
    }
}
