//! Byte-oriented range coder driven by 16-bit cumulative frequency tables.
//!
//! Encoder state is a 64-bit `low` (bit 32 holds a pending carry) and a 32-bit
//! `range`. A symbol with cumulative interval `[c, c + f)` out of `2¹⁶` maps to
//! `[⌊R·c / 2¹⁶⌋, ⌊R·(c + f) / 2¹⁶⌋)` of the current range `R`, computed with
//! a 64-bit product. While `range < 2²⁴` the top byte of `low` is shifted out
//! through a one-byte cache plus a run counter of `0xFF` bytes, so a carry can
//! ripple into bytes that have not been written yet.
//!
//! Finalization shifts `low` out five times. The very first byte produced by
//! that scheme is always zero and is dropped, so a payload is exactly four
//! bytes longer than the number of renormalization shifts, and an empty
//! sequence encodes to four zero bytes. The decoder primes its 32-bit code
//! window with the first four payload bytes (big-endian) and reads one byte per
//! renormalization shift; needing a byte past the end is an error.

use crate::entropy::{QuantizedCdfTable, CDF_PRECISION_BITS};
use crate::error::{CodecError, Result};

const TOP: u32 = 1 << 24;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn scaled(range: u32, cum: u32) -> u32 {
    ((u64::from(range) * u64::from(cum)) >> CDF_PRECISION_BITS) as u32
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, cache_size: 1, out: Vec::new() }
    }

    pub fn encode(&mut self, symbol: usize, table: &QuantizedCdfTable) -> Result<()> {
        if symbol >= table.len() {
            return Err(CodecError::CodingInfeasible { symbol });
        }
        let (start, end) = (table.start(symbol), table.start(symbol + 1));
        let lo = scaled(self.range, start);
        let hi = scaled(self.range, end);
        if hi <= lo {
            return Err(CodecError::CodingInfeasible { symbol });
        }
        self.low += u64::from(lo);
        self.range = hi - lo;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        debug_assert_eq!(self.out[0], 0);
        self.out.remove(0);
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    code: u32,
    range: u32,
    input: &'a [u8],
    pos: usize,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self> {
        if input.len() < 4 {
            return Err(CodecError::StreamExhausted);
        }
        let code = u32::from_be_bytes([input[0], input[1], input[2], input[3]]);
        Ok(RangeDecoder { code, range: u32::MAX, input, pos: 4 })
    }

    pub fn decode(&mut self, table: &QuantizedCdfTable) -> Result<usize> {
        // Largest cumulative count c with ⌊R·c / 2¹⁶⌋ ≤ code.
        let target = (((u64::from(self.code) + 1) << CDF_PRECISION_BITS) - 1) / u64::from(self.range);
        let target = target.min(u64::from(crate::entropy::CDF_TOTAL - 1)) as u32;
        let symbol = table.symbol_for(target);
        let lo = scaled(self.range, table.start(symbol));
        let hi = scaled(self.range, table.start(symbol + 1));
        if hi <= lo || self.code < lo {
            return Err(CodecError::Corrupt("range decoder lost synchronization".into()));
        }
        self.code -= lo;
        self.range = hi - lo;
        if self.code >= self.range {
            return Err(CodecError::Corrupt("range decoder lost synchronization".into()));
        }
        while self.range < TOP {
            let byte = *self.input.get(self.pos).ok_or(CodecError::StreamExhausted)?;
            self.pos += 1;
            self.code = (self.code << 8) | u32::from(byte);
            self.range <<= 8;
        }
        Ok(symbol)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Encodes `symbols[i]` with `tables[i]`.
pub fn rc_encode(symbols: &[usize], tables: &[QuantizedCdfTable]) -> Result<Vec<u8>> {
    if symbols.len() != tables.len() {
        return Err(CodecError::Geometry(format!("{} symbols but {} tables", symbols.len(), tables.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&s, t) in symbols.iter().zip(tables) {
        enc.encode(s, t)?;
    }
    Ok(enc.finish())
}

pub fn rc_decode(payload: &[u8], tables: &[QuantizedCdfTable]) -> Result<Vec<usize>> {
    let mut dec = RangeDecoder::new(payload)?;
    tables.iter().map(|t| dec.decode(t)).collect()
}
