//! `STBL1` solution dumps: magic, `u32` axis count, `u32` node count per
//! axis, `f64` spacing, then every node value in row-major order (last axis
//! fastest). All little-endian.

use std::io::Write;
use std::path::Path;

use stablab::geometry::ScalarField;

use crate::HarnessError;

pub const MAGIC: &[u8; 5] = b"STBL1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub shape: Vec<usize>,
    pub h: f64,
    pub values: Vec<f64>,
}

pub fn encode(u: &ScalarField) -> Vec<u8> {
    let grid = u.grid();
    let shape = grid.shape();
    let mut out = Vec::with_capacity(5 + 4 * (1 + shape.len()) + 8 * (1 + grid.node_count()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &m in shape {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.spacing().to_le_bytes());
    let mut multi = vec![0usize; shape.len()];
    for _ in 0..grid.node_count() {
        out.extend_from_slice(&u.get(grid.index_of(&multi)).to_le_bytes());
        for k in (0..shape.len()).rev() {
            multi[k] += 1;
            if multi[k] < shape[k] {
                break;
            }
            multi[k] = 0;
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Dump, HarnessError> {
    let bad = |m: &str| HarnessError::Dump(m.to_string());
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8], HarnessError> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
        pos += n;
        Ok(s)
    };
    if take(5)? != MAGIC {
        return Err(bad("missing STBL1 magic"));
    }
    let axes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if axes == 0 || axes > 3 {
        return Err(bad("axis count must be 1..=3"));
    }
    let mut shape = Vec::with_capacity(axes);
    for _ in 0..axes {
        shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
    }
    let h = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let count: usize = shape.iter().product();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Dump { shape, h, values })
}

pub fn write(path: &Path, u: &ScalarField) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(&encode(u)).map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<Dump, HarnessError> {
    decode(&std::fs::read(path).map_err(|e| HarnessError::io(path, e))?)
}
