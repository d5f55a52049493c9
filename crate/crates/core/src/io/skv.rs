//! Raw volume format: 4-byte magic `SKV1`, `u32` resolution, 8 reserved zero bytes,
//! then `r^3` little-endian `f32` values, x fastest.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::VoxelGrid;
use crate::scalar::Scalar;

pub const SKV_MAGIC: &[u8; 4] = b"SKV1";

pub fn write_skv<T: Scalar>(grid: &VoxelGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SKV_MAGIC)?;
    w.write_all(&(grid.resolution() as u32).to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for v in grid.values() {
        w.write_all(&(v.to_f64_lossy() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_skv<T: Scalar>(path: impl AsRef<Path>) -> Result<VoxelGrid<T>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != SKV_MAGIC {
        return Err(Error::format("skv", "bad magic"));
    }
    let res = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n = res
        .checked_mul(res)
        .and_then(|v| v.checked_mul(res))
        .ok_or_else(|| Error::format("skv", "resolution overflows"))?;
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| T::lit(f32::from_le_bytes(b.try_into().unwrap()) as f64))
        .collect();
    VoxelGrid::new(res, values)
}
