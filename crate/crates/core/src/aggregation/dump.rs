//! Binary pyramid dump for golden tests.
//!
//! Layout, all little-endian:
//! `b"FPYR"`, `u32 version (=1)`, `u32 views`, `u32 levels`, `u32 channels`,
//! then for each view and each level: `u32 height`, `u32 width`, `f64 stride`,
//! followed by `height * width * channels` row-major `f64` values.

use std::io::{Read, Write};

use super::{FeatureGrid, FeaturePyramid};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FPYR";
const VERSION: u32 = 1;

pub fn write_pyramid<W: Write>(pyr: &FeaturePyramid, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for x in [
        VERSION,
        pyr.num_views() as u32,
        pyr.num_levels() as u32,
        pyr.channels() as u32,
    ] {
        w.write_all(&x.to_le_bytes())?;
    }
    for view in 0..pyr.num_views() {
        for grid in pyr.view(view) {
            w.write_all(&(grid.height() as u32).to_le_bytes())?;
            w.write_all(&(grid.width() as u32).to_le_bytes())?;
            w.write_all(&grid.stride().to_le_bytes())?;
            for x in grid.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_pyramid<R: Read>(mut r: R) -> Result<FeaturePyramid> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::MalformedDump("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::MalformedDump(format!("unsupported version {version}")));
    }
    let views = read_u32(&mut r)? as usize;
    let levels = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(views);
    for _ in 0..views {
        let mut grids = Vec::with_capacity(levels);
        for _ in 0..levels {
            let h = read_u32(&mut r)? as usize;
            let w = read_u32(&mut r)? as usize;
            let stride = read_f64(&mut r)?;
            let n = h
                .checked_mul(w)
                .and_then(|x| x.checked_mul(channels))
                .ok_or_else(|| Error::MalformedDump("grid size overflows".into()))?;
            let mut data = Vec::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                data.push(read_f64(&mut r)?);
            }
            grids.push(FeatureGrid::new(h, w, channels, stride, data)?);
        }
        out.push(grids);
    }
    FeaturePyramid::new(out)
}
