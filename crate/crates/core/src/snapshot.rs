//! Binary field snapshot container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes      | content                                            |
//! |------------|----------------------------------------------------|
//! | 8          | magic `SLFIELD1`                                   |
//! | 4          | `u32` spatial dimension N                          |
//! | 4          | `u32` points per axis M                            |
//! | 8          | `f64` extent per axis L                            |
//! | 8          | `f64` time                                         |
//! | 4          | `u32` metadata length K                            |
//! | K          | metadata, UTF-8 JSON object of numbers (may be `{}`) |
//! | 16 * M^N   | samples as interleaved `(re, im)` `f64`, row-major |
//!
//! Floats are stored as raw IEEE-754 bits, so a write/read cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::field::{ComplexField, Grid};

pub const MAGIC: &[u8; 8] = b"SLFIELD1";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: ComplexField,
    pub metadata: BTreeMap<String, f64>,
}

impl Snapshot {
    pub fn new(time: f64, field: ComplexField) -> Self {
        Snapshot { time, field, metadata: BTreeMap::new() }
    }

    pub fn with_metadata(mut self, key: &str, value: f64) -> Self {
        self.metadata.insert(key.to_string(), value);
        self
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let grid = self.field.grid();
        w.write_all(MAGIC)?;
        w.write_all(&(grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(grid.points() as u32).to_le_bytes())?;
        w.write_all(&grid.extent().to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        // serde_json prints shortest round-trip floats, so metadata is exact too
        let meta = serde_json::to_vec(&self.metadata)?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        for z in self.field.values() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LabError::Format("bad magic".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        let points = read_u32(&mut r)? as usize;
        let extent = read_f64(&mut r)?;
        let time = read_f64(&mut r)?;
        let grid = Grid::new(dim, extent, points)?;
        let meta_len = read_u32(&mut r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let metadata: BTreeMap<String, f64> = if meta.is_empty() {
            BTreeMap::new()
        } else {
            serde_json::from_slice(&meta)?
        };
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            values.push(Complex64::new(re, im));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(LabError::Format("trailing bytes after samples".into()));
        }
        Ok(Snapshot { time, field: ComplexField::new(grid, values)?, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
