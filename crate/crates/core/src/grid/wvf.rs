//! `WVF1` binary field snapshots.
//!
//! Layout (little-endian): magic `WVF1`, `u32 dims[3]`, `f64 origin[3]`,
//! `f64 spacing`, `f64 time`, then `dims[0]*dims[1]*dims[2]` `f64` values in
//! row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DataPair, GridSpec, ScalarField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"WVF1";

pub fn write_field<W: Write>(mut w: W, field: &ScalarField, time: f64) -> Result<()> {
    let g = &field.grid;
    w.write_all(MAGIC)?;
    for &n in &g.dims {
        let n = u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    for &o in &g.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&g.spacing.to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.values.len() * 8);
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_field<R: Read>(mut r: R) -> Result<(ScalarField, f64)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let origin = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
    let spacing = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;
    let grid = GridSpec::new(origin, spacing, dims)?;
    let mut raw = vec![0u8; grid.len() * 8];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((ScalarField::new(grid, values)?, time))
}

pub fn save_field(path: impl AsRef<Path>, field: &ScalarField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_field(&mut w, field, time)?;
    w.flush()?;
    Ok(())
}

pub fn load_field(path: impl AsRef<Path>) -> Result<(ScalarField, f64)> {
    read_field(BufReader::new(File::open(path)?))
}

/// Writes `<stem>_u.wvf` and `<stem>_ut.wvf` next to each other.
pub fn save_pair(dir: impl AsRef<Path>, stem: &str, data: &DataPair, time: f64) -> Result<[std::path::PathBuf; 2]> {
    let p0 = dir.as_ref().join(format!("{stem}_u.wvf"));
    let p1 = dir.as_ref().join(format!("{stem}_ut.wvf"));
    save_field(&p0, &data.f0, time)?;
    save_field(&p1, &data.f1, time)?;
    Ok([p0, p1])
}

pub fn load_pair(f0: impl AsRef<Path>, f1: impl AsRef<Path>) -> Result<(DataPair, f64)> {
    let (a, t) = load_field(f0)?;
    let (b, _) = load_field(f1)?;
    Ok((DataPair::new(a, b)?, t))
}
