//! `TNSR`: a minimal little-endian tensor dump.
//!
//! ```text
//! "TNSR"  dtype u8 (0 = f32, 1 = i32, 2 = f64)  rank u8  dims u32 × rank  data
//! ```

use std::path::Path;

use crate::error::{CodecError, Result};

const MAGIC: &[u8; 4] = b"TNSR";

#[derive(Debug, Clone, PartialEq)]
pub enum TnsrData {
    F32(Vec<f32>),
    I32(Vec<i32>),
    F64(Vec<f64>),
}

impl TnsrData {
    pub fn len(&self) -> usize {
        match self {
            TnsrData::F32(v) => v.len(),
            TnsrData::I32(v) => v.len(),
            TnsrData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> u8 {
        match self {
            TnsrData::F32(_) => 0,
            TnsrData::I32(_) => 1,
            TnsrData::F64(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TnsrArray {
    pub dims: Vec<usize>,
    pub data: TnsrData,
}

impl TnsrArray {
    pub fn new(dims: Vec<usize>, data: TnsrData) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() || dims.len() > usize::from(u8::MAX) {
            return Err(CodecError::Format(format!("dims {dims:?} do not match {} values", data.len())));
        }
        Ok(TnsrArray { dims, data })
    }
}

pub fn encode_tnsr(a: &TnsrArray) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.push(a.data.dtype());
    out.push(a.dims.len() as u8);
    for &d in &a.dims {
        out.extend((d as u32).to_le_bytes());
    }
    match &a.data {
        TnsrData::F32(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
        TnsrData::I32(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
        TnsrData::F64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
    }
    out
}

pub fn decode_tnsr(bytes: &[u8]) -> Result<TnsrArray> {
    let bad = |m: &str| CodecError::Format(format!("TNSR: {m}"));
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let (dtype, rank) = (bytes[4], usize::from(bytes[5]));
    let body = &bytes[6..];
    if body.len() < 4 * rank {
        return Err(bad("truncated dims"));
    }
    let dims: Vec<usize> =
        body[..4 * rank].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("dims overflow"))?;
    let raw = &body[4 * rank..];
    let width = match dtype {
        0 | 1 => 4,
        2 => 8,
        _ => return Err(bad("unknown dtype")),
    };
    if raw.len() != n.checked_mul(width).ok_or_else(|| bad("dims overflow"))? {
        return Err(bad("data length does not match dims"));
    }
    let data = match dtype {
        0 => TnsrData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
        1 => TnsrData::I32(raw.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        _ => TnsrData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
    };
    Ok(TnsrArray { dims, data })
}

pub fn read_tnsr(path: impl AsRef<Path>) -> Result<TnsrArray> {
    decode_tnsr(&std::fs::read(path)?)
}

pub fn write_tnsr(path: impl AsRef<Path>, a: &TnsrArray) -> Result<()> {
    std::fs::write(path, encode_tnsr(a))?;
    Ok(())
}
