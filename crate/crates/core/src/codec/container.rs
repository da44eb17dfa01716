//! The `GMMC` compressed container.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "GMMC"
//!      4     2  format version (u16, = 1)
//!      6     1  mode: 0 factorized-params (reserved), 1 hyperprior, 2 joint
//!      7     1  reserved, zero
//!      8     4  N (u32)
//!     12     4  K (u32)
//!     16     4  original height (u32)
//!     20     4  original width (u32)
//!     24     8  weights checksum (u64)
//!     32     4  ẑ payload length Lz (u32)
//!     36    Lz  ẑ payload
//!        4      ŷ payload length Ly (u32)
//!        Ly     ŷ payload
//!        8      content checksum: FNV-1a 64 of every preceding byte
//! ```
//!
//! All integers are little-endian. The ẑ payload starts with the factorized
//! prior, one table per hyper channel, followed by the range-coded ẑ symbols.
//! A table is stored by its 512 per-symbol counts (the first differences of
//! its cumulative table, total 2^16), themselves delta-coded as LEB128
//! zigzag varints with zero-delta runs collapsed; see
//! [`encode_prior_tables`]. The ŷ payload is range-coded ŷ symbols only. Padded
//! dimensions are not stored: they are the original ones rounded up to a
//! multiple of 64.

use crate::checksum::fnv1a64;
use crate::entropy::QuantizedCdfTable;
use crate::error::{CodecError, Result};
use crate::quant::ALPHABET_SIZE;

pub const CONTAINER_MAGIC: &[u8; 4] = b"GMMC";
pub const CONTAINER_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

/// How ŷ's distribution is conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodingMode {
    /// Reserved flag value; not produced or accepted by this codec.
    FactorizedParams,
    /// Mixture parameters from the hyperprior alone.
    Hyperprior,
    /// Hyperprior plus the causal masked-convolution context.
    Joint,
}

impl CodingMode {
    pub fn flag(self) -> u8 {
        match self {
            CodingMode::FactorizedParams => 0,
            CodingMode::Hyperprior => 1,
            CodingMode::Joint => 2,
        }
    }

    pub fn from_flag(flag: u8) -> Result<Self> {
        match flag {
            0 => Ok(CodingMode::FactorizedParams),
            1 => Ok(CodingMode::Hyperprior),
            2 => Ok(CodingMode::Joint),
            f => Err(CodecError::Corrupt(format!("unknown mode flag {f}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodingMode::FactorizedParams => "factorized-params",
            CodingMode::Hyperprior => "hyperprior",
            CodingMode::Joint => "joint",
        }
    }
}

impl std::str::FromStr for CodingMode {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyperprior" => Ok(CodingMode::Hyperprior),
            "joint" => Ok(CodingMode::Joint),
            "factorized-params" => Ok(CodingMode::FactorizedParams),
            other => Err(CodecError::Usage(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CodingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedContainer {
    pub mode: CodingMode,
    pub n: u32,
    pub k: u32,
    pub height: u32,
    pub width: u32,
    pub weights_checksum: u64,
    pub z_payload: Vec<u8>,
    pub y_payload: Vec<u8>,
}

impl CompressedContainer {
    /// Bytes of entropy-coded data (prior tables included).
    pub fn payload_bytes(&self) -> usize {
        self.z_payload.len() + self.y_payload.len()
    }

    /// Payload bits per original pixel.
    pub fn bpp(&self) -> f64 {
        (self.payload_bytes() * 8) as f64 / (self.height as f64 * self.width as f64)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload_bytes() + 16);
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.push(self.mode.flag());
        out.push(0);
        for v in [self.n, self.k, self.height, self.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.weights_checksum.to_le_bytes());
        out.extend_from_slice(&(self.z_payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.z_payload);
        out.extend_from_slice(&(self.y_payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.y_payload);
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| CodecError::Corrupt(m.to_string());
        if bytes.len() < HEADER_LEN + 4 + 4 + 8 {
            return Err(corrupt("container too short"));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(corrupt("content checksum mismatch"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let version = u16::from_le_bytes([body[4], body[5]]);
        if version != CONTAINER_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mode = CodingMode::from_flag(body[6])?;
        let (n, k, height, width) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        if n == 0 || k == 0 || height == 0 || width == 0 {
            return Err(corrupt("zero dimension in header"));
        }
        let weights_checksum = u64::from_le_bytes(body[24..32].try_into().unwrap());
        let mut pos = HEADER_LEN;
        let section = |pos: &mut usize| -> Result<Vec<u8>> {
            if *pos + 4 > body.len() {
                return Err(corrupt("truncated length field"));
            }
            let len = u32_at(*pos) as usize;
            *pos += 4;
            if *pos + len > body.len() {
                return Err(corrupt("declared payload length exceeds container"));
            }
            let v = body[*pos..*pos + len].to_vec();
            *pos += len;
            Ok(v)
        };
        let z_payload = section(&mut pos)?;
        let y_payload = section(&mut pos)?;
        if pos != body.len() {
            return Err(corrupt("trailing bytes after payloads"));
        }
        Ok(CompressedContainer { mode, n, k, height, width, weights_checksum, z_payload, y_payload })
    }
}

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn get_varint(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let mut v = 0u32;
    for shift in (0..35).step_by(7) {
        let b = *bytes.get(*pos).ok_or_else(|| CodecError::Corrupt("prior table truncated".into()))?;
        *pos += 1;
        v |= u32::from(b & 0x7f).checked_shl(shift).unwrap_or(0);
        if b & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(CodecError::Corrupt("overlong varint in prior table".into()))
}

fn zigzag(d: i32) -> u32 {
    ((d << 1) ^ (d >> 31)) as u32
}

fn unzigzag(v: u32) -> i32 {
    (v >> 1) as i32 ^ -((v & 1) as i32)
}

/// Serializes prior tables by their per-symbol counts, delta-coded: each
/// count minus the previous one (the first against 0) as a zigzag varint,
/// except that a run of zero deltas is written as `0` followed by the run
/// length.
pub fn encode_prior_tables(tables: &[QuantizedCdfTable]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tables {
        let counts = t.counts();
        let mut prev = 0i32;
        let mut i = 0;
        while i < counts.len() {
            let d = counts[i] as i32 - prev;
            if d == 0 {
                let run = counts[i..].iter().take_while(|&&c| c as i32 == prev).count();
                out.push(0);
                put_varint(&mut out, run as u32);
                i += run;
            } else {
                put_varint(&mut out, zigzag(d));
                prev = counts[i] as i32;
                i += 1;
            }
        }
    }
    out
}

/// Splits a ẑ payload into its `channels` prior tables and the coded bytes.
pub fn decode_prior_tables(payload: &[u8], channels: usize) -> Result<(Vec<QuantizedCdfTable>, &[u8])> {
    let mut pos = 0;
    let mut tables = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut counts = Vec::with_capacity(ALPHABET_SIZE);
        let mut prev = 0i64;
        while counts.len() < ALPHABET_SIZE {
            let v = get_varint(payload, &mut pos)?;
            if v == 0 {
                let run = get_varint(payload, &mut pos)? as usize;
                if run == 0 || counts.len() + run > ALPHABET_SIZE {
                    return Err(CodecError::Corrupt("bad run in prior table".into()));
                }
                counts.resize(counts.len() + run, prev as u32);
            } else {
                prev += i64::from(unzigzag(v));
                if !(1..=i64::from(u16::MAX)).contains(&prev) {
                    return Err(CodecError::Corrupt("prior table count out of range".into()));
                }
                counts.push(prev as u32);
            }
        }
        let t = QuantizedCdfTable::from_counts(&counts)
            .map_err(|e| CodecError::Corrupt(format!("bad prior table: {e}")))?;
        tables.push(t);
    }
    Ok((tables, &payload[pos..]))
}
