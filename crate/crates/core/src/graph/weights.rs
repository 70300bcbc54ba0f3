//! MAID weight container.
//!
//! ```text
//! "MAID"  u32 version (=1)  u32 param_count
//! per param, sorted by name:
//!   u32 name_len  name (UTF-8)  u32 rank  u32 dims[rank]  u8 dtype (0 = f32)  f32 data[prod(dims)]
//! ```
//! All integers and floats are little-endian. Leading unit dimensions are
//! dropped on write (rank >= 1) and restored on read, so tensors are always
//! rank 4 in memory.

use alloc::string::String;
use alloc::vec::Vec;

use super::ParamStore;
use crate::error::{Result, WeightError};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MAID";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

fn stored_dims(s: Shape) -> Vec<u32> {
    let d = s.dims();
    let skip = d.iter().take(3).take_while(|&&v| v == 1).count();
    d[skip..].iter().map(|&v| v as u32).collect()
}

/// Size in bytes of the header section (everything except tensor data).
pub fn header_len(params: &ParamStore<f32>) -> usize {
    12 + params
        .iter()
        .map(|(name, t)| 4 + name.len() + 4 + 4 * stored_dims(t.shape()).len() + 1)
        .sum::<usize>()
}

/// Total encoded size: header plus 4 bytes per scalar.
pub fn encoded_len(params: &ParamStore<f32>) -> usize {
    header_len(params) + 4 * params.scalar_count()
}

pub fn encode(params: &ParamStore<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(params));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let dims = stored_dims(t.shape());
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(DTYPE_F32);
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(WeightError::Truncated { offset: self.pos })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, WeightError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore<f32>> {
    Ok(decode_inner(bytes)?)
}

fn decode_inner(bytes: &[u8]) -> Result<ParamStore<f32>, WeightError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(WeightError::BadMagic([
            magic[0], magic[1], magic[2], magic[3],
        ]));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(WeightError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_at = r.pos;
        let len = r.u32()? as usize;
        let name = core::str::from_utf8(r.take(len)?)
            .map_err(|_| WeightError::BadName { offset: name_at })?;
        if name.is_empty() || store.contains(name) {
            return Err(WeightError::BadName { offset: name_at });
        }
        let name = String::from(name);
        let rank = r.u32()? as usize;
        if rank == 0 || rank > 4 {
            return Err(WeightError::DimOverflow { name });
        }
        let mut dims = [1usize; 4];
        for i in 0..rank {
            dims[4 - rank + i] = r.u32()? as usize;
        }
        let volume = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&v| v > 0 && v <= bytes.len() / 4)
            .ok_or_else(|| WeightError::DimOverflow { name: name.clone() })?;
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F32 {
            return Err(WeightError::UnsupportedDtype(dtype));
        }
        let raw = r.take(4 * volume)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let shape = Shape {
            n: dims[0],
            h: dims[1],
            w: dims[2],
            c: dims[3],
        };
        let t = Tensor::from_vec(shape, data)
            .map_err(|_| WeightError::DimOverflow { name: name.clone() })?;
        store.insert(name, t);
    }
    if r.pos != bytes.len() {
        return Err(WeightError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(store)
}
