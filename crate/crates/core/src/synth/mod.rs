//! Deterministic synthetic reservoir-like datasets: pressure and three
//! saturations on a masked grid, driven by injectors that alternate between
//! gas and water every half cycle.
//!
//! Each step applies explicit 5-point diffusion with no-flux boundaries,
//! then well sources, then clamps the saturations to `[0, 1]` and rescales
//! them to sum to one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{FrameStack, Property};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    /// Cells with `row + col < notch` measured from any corner are inactive.
    pub notch: usize,
    /// Explicit mask, one string per row, `#` active and `.` inactive.
    /// Overrides `notch`.
    pub mask: Option<Vec<String>>,
    pub frames: usize,
    /// Injection cycle length in frames; gas for the first half, water after.
    pub period: usize,
    pub alpha: f64,
    /// Saturation added at an injector per step.
    pub source: f64,
    /// Pressure added at an injector per step while injecting water.
    pub injection_pressure: f64,
    /// Fraction of `injection_pressure` applied while injecting gas.
    pub gas_pressure_factor: f64,
    /// Pressure removed at a producer per step.
    pub production_pressure: f64,
    pub injectors: Vec<[usize; 2]>,
    pub producers: Vec<[usize; 2]>,
    pub initial_pressure: f64,
    /// Pressure increase per row (depth gradient).
    pub pressure_gradient: f64,
    /// Initial `[oil, gas, water]` saturations.
    pub initial_saturation: [f64; 3],
    /// Amplitude of the uniform initial perturbation, mirrored across columns.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SynthConfig {
    /// 16x8 grid, 120 frames, four injectors and four producers.
    pub fn desk() -> Self {
        SynthConfig {
            rows: 16,
            cols: 8,
            notch: 2,
            mask: None,
            frames: 120,
            period: 12,
            alpha: 0.2,
            source: 0.08,
            injection_pressure: 40.0,
            gas_pressure_factor: 0.5,
            production_pressure: 30.0,
            injectors: vec![[3, 2], [3, 5], [11, 2], [11, 5]],
            producers: vec![[7, 3], [7, 4], [14, 3], [14, 4]],
            initial_pressure: 1500.0,
            pressure_gradient: 5.0,
            initial_saturation: [0.7, 0.05, 0.25],
            noise: 0.02,
            seed: 42,
        }
    }

    /// 34x16 grid over 360 frames.
    pub fn field() -> Self {
        SynthConfig {
            rows: 34,
            cols: 16,
            notch: 3,
            frames: 360,
            injectors: vec![[8, 4], [8, 11], [25, 4], [25, 11]],
            producers: vec![[16, 7], [16, 8], [31, 7], [31, 8]],
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "field" => Ok(Self::field()),
            other => Err(Error::config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn build_mask(&self) -> Result<Vec<bool>> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::config("grid must be at least 1x1"));
        }
        if let Some(rows) = &self.mask {
            if rows.len() != self.rows || rows.iter().any(|r| r.chars().count() != self.cols) {
                return Err(Error::config(format!(
                    "mask must have {} rows of {} characters",
                    self.rows, self.cols
                )));
            }
            return rows
                .iter()
                .flat_map(|r| r.chars())
                .map(|ch| match ch {
                    '#' => Ok(true),
                    '.' => Ok(false),
                    other => Err(Error::config(format!("mask character {other:?}"))),
                })
                .collect();
        }
        let (h, w) = (self.rows, self.cols);
        Ok((0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let dr = r.min(h - 1 - r);
                let dc = c.min(w - 1 - c);
                dr + dc >= self.notch
            })
            .collect())
    }

    pub fn validate(&self) -> Result<Vec<bool>> {
        if !(0.0..=0.25).contains(&self.alpha) {
            return Err(Error::config(format!(
                "diffusivity {} outside the stable range [0, 0.25]",
                self.alpha
            )));
        }
        if self.frames == 0 || self.period < 2 {
            return Err(Error::config("need at least one frame and a period of at least 2"));
        }
        let finite = [
            self.source,
            self.injection_pressure,
            self.gas_pressure_factor,
            self.production_pressure,
            self.initial_pressure,
            self.pressure_gradient,
            self.noise,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.noise < 0.0 || self.source < 0.0 {
            return Err(Error::config("source strengths and noise must be finite, noise and source non-negative"));
        }
        let s = self.initial_saturation;
        if s.iter().any(|v| !(0.0..=1.0).contains(v)) || (s.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("initial saturations must lie in [0, 1] and sum to 1"));
        }
        let mask = self.build_mask()?;
        if mask.iter().all(|&m| !m) {
            return Err(Error::config("mask has no active cells"));
        }
        for &[r, c] in self.injectors.iter().chain(&self.producers) {
            if r >= self.rows || c >= self.cols || !mask[r * self.cols + c] {
                return Err(Error::config(format!("well at ({r}, {c}) is not on an active cell")));
            }
        }
        Ok(mask)
    }
}

/// Field values at one step, in `f64`, row-major. Inactive cells hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthState {
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
    pub pressure: Vec<f64>,
    /// `[oil, gas, water]`
    pub saturation: [Vec<f64>; 3],
}

impl SynthState {
    /// Initial condition for `cfg`: uniform values plus a depth gradient on
    /// pressure and a seeded perturbation mirrored across columns.
    pub fn initial(cfg: &SynthConfig) -> Result<Self> {
        let mask = cfg.validate()?;
        let (h, w) = (cfg.rows, cfg.cols);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let half = w.div_ceil(2);
        let mut draw = |amp: f64| -> Vec<f64> {
            let left: Vec<f64> = (0..h * half)
                .map(|_| if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 })
                .collect();
            (0..h * w)
                .map(|i| {
                    let (r, c) = (i / w, i % w);
                    left[r * half + c.min(w - 1 - c)]
                })
                .collect()
        };
        let p_noise = draw(cfg.noise * cfg.initial_pressure * 0.01);
        let s_noise = [draw(cfg.noise), draw(cfg.noise), draw(cfg.noise)];
        let pressure = (0..h * w)
            .map(|i| cfg.initial_pressure + cfg.pressure_gradient * (i / w) as f64 + p_noise[i])
            .collect();
        let saturation = std::array::from_fn(|k| {
            (0..h * w)
                .map(|i| cfg.initial_saturation[k] + s_noise[k][i])
                .collect()
        });
        let mut state = SynthState {
            rows: h,
            cols: w,
            mask,
            pressure,
            saturation,
        };
        state.close_saturations();
        state.zero_inactive();
        Ok(state)
    }

    fn zero_inactive(&mut self) {
        for (i, &m) in self.mask.iter().enumerate() {
            if !m {
                self.pressure[i] = 0.0;
                for s in &mut self.saturation {
                    s[i] = 0.0;
                }
            }
        }
    }

    fn close_saturations(&mut self) {
        for i in 0..self.mask.len() {
            if !self.mask[i] {
                continue;
            }
            let [o, g, w] = [0, 1, 2].map(|k| self.saturation[k][i].clamp(0.0, 1.0));
            let sum = o + g + w;
            let v = if sum > 0.0 {
                [o / sum, g / sum, w / sum]
            } else {
                [1.0, 0.0, 0.0]
            };
            for k in 0..3 {
                self.saturation[k][i] = v[k];
            }
        }
    }

    /// `u + alpha * laplacian(u)` over active cells with no-flux boundaries.
    pub fn diffuse(&self, u: &[f64], alpha: f64) -> Vec<f64> {
        let (h, w) = (self.rows, self.cols);
        let flux = |i: usize, j: Option<usize>| match j {
            Some(j) if self.mask[j] => u[j] - u[i],
            _ => 0.0,
        };
        (0..h * w)
            .map(|i| {
                if !self.mask[i] {
                    return 0.0;
                }
                let (r, c) = (i / w, i % w);
                let up = (r > 0).then(|| i - w);
                let down = (r + 1 < h).then(|| i + w);
                let left = (c > 0).then(|| i - 1);
                let right = (c + 1 < w).then(|| i + 1);
                let lap = (flux(i, up) + flux(i, down)) + (flux(i, left) + flux(i, right));
                u[i] + alpha * lap
            })
            .collect()
    }

    /// Advances one step; `t` is the index of the step being taken, which
    /// selects the injection phase.
    pub fn step(&mut self, cfg: &SynthConfig, t: usize) {
        self.pressure = self.diffuse(&self.pressure, cfg.alpha);
        for k in 0..3 {
            self.saturation[k] = self.diffuse(&self.saturation[k], cfg.alpha);
        }
        let gas_phase = t % cfg.period < cfg.period / 2;
        for &[r, c] in &cfg.injectors {
            let i = r * self.cols + c;
            if gas_phase {
                self.pressure[i] += cfg.gas_pressure_factor * cfg.injection_pressure;
                self.saturation[1][i] += cfg.source;
            } else {
                self.pressure[i] += cfg.injection_pressure;
                self.saturation[2][i] += cfg.source;
            }
        }
        for &[r, c] in &cfg.producers {
            self.pressure[r * self.cols + c] -= cfg.production_pressure;
        }
        self.close_saturations();
    }

    fn field(&self, p: Property) -> &[f64] {
        match p {
            Property::Pressure => &self.pressure,
            Property::OilSat => &self.saturation[0],
            Property::GasSat => &self.saturation[1],
            Property::WaterSat => &self.saturation[2],
        }
    }

    /// Sum of a field over active cells.
    pub fn total(&self, p: Property) -> f64 {
        self.field(p).iter().sum()
    }
}

/// One stack per property, all on the same grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub pressure: FrameStack,
    pub oil_sat: FrameStack,
    pub gas_sat: FrameStack,
    pub water_sat: FrameStack,
}

impl SynthData {
    pub fn get(&self, p: Property) -> &FrameStack {
        match p {
            Property::Pressure => &self.pressure,
            Property::OilSat => &self.oil_sat,
            Property::GasSat => &self.gas_sat,
            Property::WaterSat => &self.water_sat,
        }
    }
}

/// Runs the generator for `cfg.frames` frames; frame 0 is the initial state.
pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let mut state = SynthState::initial(cfg)?;
    let cells = cfg.rows * cfg.cols;
    let mut out: [Vec<f32>; 4] = std::array::from_fn(|_| Vec::with_capacity(cells * cfg.frames));
    for t in 0..cfg.frames {
        if t > 0 {
            state.step(cfg, t - 1);
        }
        for (buf, p) in out.iter_mut().zip(Property::ALL) {
            buf.extend(state.field(p).iter().map(|&v| v as f32));
        }
    }
    let [p, o, g, w] = out;
    let stack = |prop, frames| FrameStack::new(prop, cfg.rows, cfg.cols, state.mask.clone(), frames);
    Ok(SynthData {
        pressure: stack(Property::Pressure, p)?,
        oil_sat: stack(Property::OilSat, o)?,
        gas_sat: stack(Property::GasSat, g)?,
        water_sat: stack(Property::WaterSat, w)?,
    })
}
