use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use stpf_core::forecast::{MetricConfig, SsimRegion};
use stpf_core::layers::CellKind;
use stpf_core::pipeline::Property;
use stpf_core::train::TrainConfig;
use stpf_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One-step predictions over the training frames.
    TrainFrames,
    /// Blind autoregressive forecast from the last training window.
    Rollout,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::TrainFrames => "train",
            Mode::Rollout => "rollout",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Cell {
    Convlstm,
    Stlstm,
}

impl From<Cell> for CellKind {
    fn from(c: Cell) -> Self {
        match c {
            Cell::Convlstm => CellKind::Convlstm,
            Cell::Stlstm => CellKind::Stlstm,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Region {
    Active,
    Full,
}

/// Run settings shared by train, predict and evaluate. Every field may be
/// given in the `--config` JSON; command-line flags take precedence.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub property: Option<Property>,
    pub all: bool,
    pub cell: CellKind,
    pub window: usize,
    pub train_frames: Option<usize>,
    pub mode: Mode,
    pub horizon: Option<usize>,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    /// Frames in the leading block of the evaluation summary.
    pub head: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: "data".into(),
            out: "runs".into(),
            checkpoint: None,
            property: None,
            all: false,
            cell: CellKind::Convlstm,
            window: 10,
            train_frames: None,
            mode: Mode::Rollout,
            horizon: None,
            train: TrainConfig::default(),
            metrics: MetricConfig::default(),
            head: 12,
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), read_json)
    }

    /// Properties selected by `--property` / `--all`.
    pub fn properties(&self) -> Result<Vec<Property>> {
        match (self.all, self.property) {
            (true, None) => Ok(Property::ALL.to_vec()),
            (false, Some(p)) => Ok(vec![p]),
            (true, Some(_)) => Err(Error::Usage("give either --property or --all, not both".into())),
            (false, None) => Err(Error::Usage("no property selected; use --property or --all".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::Config(format!("window must be at least 2, got {}", self.window)));
        }
        if self.head == 0 {
            return Err(Error::Config("head must be at least 1".into()));
        }
        self.train.validate()
    }

    pub fn property_dir(&self, p: Property) -> PathBuf {
        self.out.join(p.name())
    }

    pub fn data_file(&self, p: Property) -> PathBuf {
        self.data_dir.join(format!("{}.frms", p.name()))
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; missing fields take the preset's values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base settings: desk (16x8, 120 frames) or field (34x16, 360 frames).
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of frames to generate.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Output directory for the FRMS files.
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}

/// Flags common to train, predict and evaluate.
#[derive(Args)]
pub struct RunArgs {
    /// Run settings as JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Property to process: pressure, oil_sat, gas_sat or water_sat.
    #[arg(long)]
    pub property: Option<Property>,
    /// Process all four properties in turn.
    #[arg(long)]
    pub all: bool,
    /// Directory holding `<property>.frms` files.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Run directory; each property gets a subdirectory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Frames in the training part of the series (default: five sixths).
    #[arg(long)]
    pub train_frames: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        if let Some(p) = self.property {
            cfg.property = Some(p);
        }
        cfg.all |= self.all;
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(n) = self.train_frames {
            cfg.train_frames = Some(n);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Seed for weight initialization and batch shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Frames per input window.
    #[arg(long)]
    pub window: Option<usize>,
    /// Recurrent cell type.
    #[arg(long, value_enum)]
    pub cell: Option<Cell>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Rollout length in frames (default: the length of the test period).
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Checkpoint file (default: `<out>/<property>/model.stpf`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Which predictions to evaluate when --pred and --truth are not given.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Predicted FRMS file; requires --truth.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    /// Ground-truth FRMS file; requires --pred.
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Cells entering SSIM statistics.
    #[arg(long, value_enum)]
    pub region: Option<Region>,
    /// Override for the SSIM constant c1.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Override for the SSIM constant c2.
    #[arg(long)]
    pub c2: Option<f64>,
}

impl From<Region> for SsimRegion {
    fn from(r: Region) -> Self {
        match r {
            Region::Active => SsimRegion::Active,
            Region::Full => SsimRegion::Full,
        }
    }
}
