//! `VOXW` voxel-world files.
//!
//! ```text
//! "VOXW" | 0x01 | nx: u32 LE | ny: u32 LE | nz: u32 LE | resolution: f32 LE | nx*ny*nz bytes
//! ```
//!
//! Voxel bytes are stored x fastest, then y, then z. Ground-truth worlds use
//! 0 = free, 1 = occupied; map exports add 2 = unknown.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VOXW";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 4 + 1 + 12 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct RawVoxels {
    pub dims: [usize; 3],
    pub resolution: f32,
    pub data: Vec<u8>,
}

pub fn write<W: Write>(mut w: W, dims: [usize; 3], resolution: f32, data: &[u8]) -> Result<()> {
    let expected = dims[0] * dims[1] * dims[2];
    if data.len() != expected {
        return Err(Error::Format(format!("expected {expected} voxel bytes, got {}", data.len())));
    }
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.push(VERSION);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&resolution.to_le_bytes());
    w.write_all(&header)?;
    w.write_all(data)?;
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<RawVoxels> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
    let dims = [u32_at(5), u32_at(9), u32_at(13)];
    let resolution = f32::from_le_bytes(header[17..21].try_into().unwrap());
    if !(resolution > 0.0) {
        return Err(Error::InvalidResolution(resolution as f64));
    }
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Format("degenerate dimensions".into()))?;
    let mut data = vec![0u8; n];
    r.read_exact(&mut data)?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after voxel data".into()));
    }
    Ok(RawVoxels { dims, resolution, data })
}
