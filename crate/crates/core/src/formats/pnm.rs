//! Binary PGM (`P5`) and PPM (`P6`) with 8- or 16-bit samples.

use std::path::Path;

use crate::error::{CodecError, Result};
use crate::tensor::{Geometry, Tensor};

/// A decoded image with samples scaled to `[0, 1]` by `maxval`.
#[derive(Debug, Clone, PartialEq)]
pub struct PnmImage {
    pub pixels: Tensor,
    pub maxval: u16,
}

impl PnmImage {
    /// Grayscale images are replicated into three channels.
    pub fn into_rgb(self) -> Tensor {
        if self.pixels.channels() == 3 {
            return self.pixels;
        }
        let g = self.pixels.geometry();
        let plane = self.pixels.channel(0).to_vec();
        let mut data = Vec::with_capacity(3 * plane.len());
        for _ in 0..3 {
            data.extend_from_slice(&plane);
        }
        Tensor::from_vec(Geometry::new(3, g.height, g.width), data).expect("three planes")
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CodecError::Format(format!("bad PNM {what}")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<PnmImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(CodecError::Format("not a binary PGM/PPM file (expected P5 or P6)".into())),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(CodecError::Format(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(CodecError::Format(format!("maxval {maxval} outside 1..=65535")));
    }
    if !bytes.get(h.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(CodecError::Format("missing whitespace after maxval".into()));
    }
    let data = &bytes[h.pos + 1..];
    let wide = maxval > 255;
    let samples = channels * width * height;
    let need = samples * if wide { 2 } else { 1 };
    if data.len() < need {
        return Err(CodecError::Format(format!("pixel data truncated: {} of {need} bytes", data.len())));
    }
    let sample = |i: usize| -> usize {
        if wide {
            usize::from(u16::from_be_bytes([data[2 * i], data[2 * i + 1]]))
        } else {
            usize::from(data[i])
        }
    };
    let scale = maxval as f32;
    let mut out = Tensor::zeros(Geometry::new(channels, height, width));
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let v = sample((y * width + x) * channels + c);
                if v > maxval {
                    return Err(CodecError::Format(format!("sample {v} exceeds maxval {maxval}")));
                }
                out.set(c, y, x, v as f32 / scale);
            }
        }
    }
    Ok(PnmImage { pixels: out, maxval: maxval as u16 })
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_interleaved(magic: &str, t: &Tensor) -> Vec<u8> {
    let g = t.geometry();
    let mut out = format!("{magic}\n{} {}\n255\n", g.width, g.height).into_bytes();
    out.reserve(g.len());
    for y in 0..g.height {
        for x in 0..g.width {
            for c in 0..g.channels {
                out.push(to_u8(t.get(c, y, x)));
            }
        }
    }
    out
}

/// 8-bit `P6`; samples are clamped to `[0, 1]` and rounded.
pub fn encode_ppm(t: &Tensor) -> Result<Vec<u8>> {
    if t.channels() != 3 {
        return Err(CodecError::Geometry(format!("PPM needs 3 channels, got {}", t.geometry())));
    }
    Ok(encode_interleaved("P6", t))
}

/// 8-bit `P5`.
pub fn encode_pgm(t: &Tensor) -> Result<Vec<u8>> {
    if t.channels() != 1 {
        return Err(CodecError::Geometry(format!("PGM needs 1 channel, got {}", t.geometry())));
    }
    Ok(encode_interleaved("P5", t))
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<PnmImage> {
    decode_pnm(&std::fs::read(path)?)
}

/// Writes `P6` for three channels and `P5` for one.
pub fn write_pnm(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let bytes = if t.channels() == 1 { encode_pgm(t)? } else { encode_ppm(t)? };
    std::fs::write(path, bytes)?;
    Ok(())
}
