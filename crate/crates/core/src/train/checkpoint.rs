//! STPF checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "STPF" | version u32 = 1 | header_len u64 | JSON header (UTF-8)
//! f32 parameter blob, every tensor of every layer in declared order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{CellKind, LayerConfig, Network, NetworkSpec};
use crate::pipeline::{NormKind, NormalizationSpec, Property};

const MAGIC: &[u8; 4] = b"STPF";
const VERSION: u32 = 1;

/// A trained network with everything needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network<f32>,
    pub normalization: NormalizationSpec,
    pub rows: usize,
    pub cols: usize,
    pub mask: Vec<bool>,
    pub window: usize,
    pub train_frames: usize,
    pub seed: u64,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NormHeader {
    kind: NormKind,
    min: f64,
    max: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    property: Property,
    cell: CellKind,
    layers: Vec<LayerConfig>,
    normalization: NormHeader,
    grid: [usize; 2],
    mask: String,
    window: usize,
    train_frames: usize,
    seed: u64,
    epochs: usize,
    loss_history: Vec<f64>,
    param_count: usize,
}

impl Checkpoint {
    pub fn property(&self) -> Property {
        self.normalization.property
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let spec = self.network.spec();
        let n = self.normalization;
        let mask: Vec<u8> = self.mask.iter().map(|&m| m as u8).collect();
        let header = Header {
            property: n.property,
            cell: spec.cell,
            layers: spec.layers.clone(),
            normalization: NormHeader {
                kind: n.kind,
                min: n.min,
                max: n.max,
            },
            grid: [self.rows, self.cols],
            mask: B64.encode(mask),
            window: self.window,
            train_frames: self.train_frames,
            seed: self.seed,
            epochs: self.loss_history.len(),
            loss_history: self.loss_history.clone(),
            param_count: self.network.param_count().total,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::usage(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut blob = Vec::with_capacity(header.param_count * 4);
        for (t, _) in self.network.parameters() {
            for v in t.data() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&blob)?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        read_checkpoint(BufReader::new(File::open(path)?))
    }
}

fn truncated(at: usize, what: &str) -> Error {
    Error::format(at as u64, format!("truncated {what}"))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(truncated(bytes.len().min(4), "preamble"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"STPF\""));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| truncated(16, "JSON header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::format(16, format!("bad JSON header: {e}")))?;

    let spec = NetworkSpec {
        cell: header.cell,
        layers: header.layers,
    };
    let mut network = Network::<f32>::zeroed(spec)
        .map_err(|e| Error::format(16, format!("bad architecture: {e}")))?;
    let total = network.param_count().total;
    if header.param_count != total {
        return Err(Error::format(
            16,
            format!("header declares {} parameters, architecture has {total}", header.param_count),
        ));
    }
    let blob = &bytes[header_end..];
    if blob.len() != total * 4 {
        return Err(Error::format(
            header_end as u64,
            format!("parameter blob is {} bytes, expected {}", blob.len(), total * 4),
        ));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")));
    for (t, _) in network.parameters_mut() {
        for v in t.data_mut() {
            *v = values.next().expect("blob length checked");
        }
    }

    let [rows, cols] = header.grid;
    let mask_bytes = B64
        .decode(&header.mask)
        .map_err(|e| Error::format(16, format!("bad mask encoding: {e}")))?;
    if rows == 0 || cols == 0 || mask_bytes.len() != rows * cols || mask_bytes.iter().any(|&b| b > 1)
    {
        return Err(Error::format(16, "mask does not match the grid"));
    }
    let normalization = NormalizationSpec {
        property: header.property,
        kind: header.normalization.kind,
        min: header.normalization.min,
        max: header.normalization.max,
    };
    normalization
        .validate()
        .map_err(|e| Error::format(16, e.to_string()))?;
    Ok(Checkpoint {
        network,
        normalization,
        rows,
        cols,
        mask: mask_bytes.into_iter().map(|b| b == 1).collect(),
        window: header.window,
        train_frames: header.train_frames,
        seed: header.seed,
        loss_history: header.loss_history,
    })
}
