//! FRMS binary frame-stack files and CSV import.
//!
//! Layout (little-endian):
//!
//! ```text
//! "FRMS" | version u32 = 1 | name_len u16 | name (UTF-8)
//! T u32 | H u32 | W u32 | mask H*W bytes (0/1) | T*H*W f32, time-major
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FrameStack, Property};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FRMS";
const VERSION: u32 = 1;

pub fn write_framestack<W: Write>(fs: &FrameStack, mut w: W) -> Result<()> {
    let name = fs.property().name().as_bytes();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(name.len() as u16).to_le_bytes())?;
    w.write_all(name)?;
    for d in [fs.frame_count(), fs.rows(), fs.cols()] {
        let d = u32::try_from(d).map_err(|_| Error::usage(format!("extent {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mask: Vec<u8> = fs.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&mask)?;
    let mut buf = Vec::with_capacity(fs.frames().len() * 4);
    for v in fs.frames() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn save_framestack(fs: &FrameStack, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_framestack(fs, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {remaining} left"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn read_framestack<R: Read>(mut r: R) -> Result<FrameStack> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"FRMS\""));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let name_len = c.u16("name length")? as usize;
    let name_at = c.pos as u64;
    let name = std::str::from_utf8(c.take(name_len, "property name")?)
        .map_err(|_| Error::format(name_at, "property name is not UTF-8"))?;
    let property: Property = name
        .parse()
        .map_err(|_| Error::format(name_at, format!("unknown property {name:?}")))?;
    let dims_at = c.pos as u64;
    let t = c.u32("frame count")? as usize;
    let h = c.u32("row count")? as usize;
    let w = c.u32("column count")? as usize;
    if h == 0 || w == 0 {
        return Err(Error::format(dims_at, format!("empty grid {h}x{w}")));
    }
    let cells = h
        .checked_mul(w)
        .ok_or_else(|| Error::format(dims_at, "grid size overflows"))?;
    let values = cells
        .checked_mul(t)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(dims_at, "frame data size overflows"))?;
    let mask_at = c.pos;
    let mask = c
        .take(cells, "mask")?
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::format(
                (mask_at + i) as u64,
                format!("mask byte {other} is neither 0 nor 1"),
            )),
        })
        .collect::<Result<Vec<bool>>>()?;
    let data = c.take(values, "frame data")?;
    if c.pos != bytes.len() {
        return Err(Error::format(
            c.pos as u64,
            format!("{} trailing bytes", bytes.len() - c.pos),
        ));
    }
    let frames: Vec<f32> = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    FrameStack::new(property, h, w, mask, frames)
}

pub fn load_framestack(path: impl AsRef<Path>) -> Result<FrameStack> {
    read_framestack(BufReader::new(File::open(path)?))
}

/// Reads `t,row,col,value` records. A cell is active when it has a value
/// in every frame and inactive when it never appears; anything in between
/// is rejected. Grid extents default to the largest indices seen.
pub fn import_csv<R: Read>(
    reader: R,
    property: Property,
    grid: Option<(usize, usize)>,
) -> Result<FrameStack> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(0, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "row", "col", "value"] {
        return Err(Error::format(0, "CSV header must be t,row,col,value"));
    }
    let mut values: HashMap<(usize, usize, usize), f32> = HashMap::new();
    let (mut t_max, mut r_max, mut c_max) = (0, 0, 0);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let off = e.position().map_or(0, |p| p.byte());
            Error::format(off, e.to_string())
        })?;
        let off = rec.position().map_or(0, |p| p.byte());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_idx = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|_| Error::format(off, format!("bad index {:?}", field(i))))
        };
        let (t, r, c) = (parse_idx(0)?, parse_idx(1)?, parse_idx(2)?);
        let v: f32 = field(3)
            .parse()
            .map_err(|_| Error::format(off, format!("bad value {:?}", field(3))))?;
        if !v.is_finite() {
            return Err(Error::format(off, "non-finite value"));
        }
        if values.insert((t, r, c), v).is_some() {
            return Err(Error::format(off, format!("duplicate record t={t} row={r} col={c}")));
        }
        t_max = t_max.max(t + 1);
        r_max = r_max.max(r + 1);
        c_max = c_max.max(c + 1);
    }
    if values.is_empty() {
        return Err(Error::format(0, "CSV has no records"));
    }
    let (rows, cols) = grid.unwrap_or((r_max, c_max));
    if r_max > rows || c_max > cols {
        return Err(Error::usage(format!(
            "records reach {r_max}x{c_max}, beyond the {rows}x{cols} grid"
        )));
    }
    let mut mask = vec![false; rows * cols];
    let mut frames = vec![0.0f32; t_max * rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let present = (0..t_max).filter(|t| values.contains_key(&(*t, r, c))).count();
            if present == 0 {
                continue;
            }
            if present != t_max {
                return Err(Error::usage(format!(
                    "cell ({r},{c}) has values in {present} of {t_max} frames"
                )));
            }
            mask[r * cols + c] = true;
            for t in 0..t_max {
                frames[(t * rows + r) * cols + c] = values[&(t, r, c)];
            }
        }
    }
    FrameStack::new(property, rows, cols, mask, frames)
}
