//! Inference-time rounding and the training-time uniform-noise relaxation.
//!
//! Noise draws come from SplitMix64 seeded with the caller's 64-bit seed. Each
//! draw takes the top 24 bits of one output word: `u = (w >> 40) · 2⁻²⁴ − ½`,
//! so every sample lies on a 2⁻²⁴ grid in `[−½, ½)` and `x + u` is exact in
//! double precision for any single-precision latent `x`.

use rand_core::RngCore;
use rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::error::{CodecError, Result};
use crate::tensor::{Geometry, Tensor};

/// Smallest codable symbol.
pub const ALPHABET_MIN: i32 = -255;
/// Largest codable symbol.
pub const ALPHABET_MAX: i32 = 256;
/// Number of symbols in `[ALPHABET_MIN, ALPHABET_MAX]`.
pub const ALPHABET_SIZE: usize = (ALPHABET_MAX - ALPHABET_MIN + 1) as usize;

#[inline]
pub fn symbol_index(symbol: i32) -> usize {
    (symbol - ALPHABET_MIN) as usize
}

#[inline]
pub fn check_symbol(symbol: i32) -> Result<()> {
    if (ALPHABET_MIN..=ALPHABET_MAX).contains(&symbol) {
        Ok(())
    } else {
        Err(CodecError::AlphabetRange { symbol, min: ALPHABET_MIN, max: ALPHABET_MAX })
    }
}

/// Integer latent (`ŷ` or `ẑ`), every value inside the coding alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTensor {
    geom: Geometry,
    data: Vec<i32>,
}

impl SymbolTensor {
    pub fn new(geom: Geometry, data: Vec<i32>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(CodecError::Geometry(format!("{} symbols do not fill a {geom} tensor", data.len())));
        }
        for &s in &data {
            check_symbol(s)?;
        }
        Ok(SymbolTensor { geom, data })
    }

    pub fn zeros(geom: Geometry) -> Self {
        SymbolTensor { geom, data: vec![0; geom.len()] }
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[i32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.data[self.geom.index(c, y, x)]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, symbol: i32) -> Result<()> {
        check_symbol(symbol)?;
        let i = self.geom.index(c, y, x);
        self.data[i] = symbol;
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|&s| s as f32).collect();
        Tensor::from_vec(self.geom, data).expect("geometry preserved")
    }
}

/// `ỹ = y + u`, `u ~ U[−½, ½)`, with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedTensor {
    pub geometry: Geometry,
    pub values: Vec<f64>,
    pub seed: u64,
}

/// Round half away from zero, then clip to the alphabet.
pub fn quantize_round(latent: &Tensor) -> Result<SymbolTensor> {
    let mut data = Vec::with_capacity(latent.data().len());
    for &v in latent.data() {
        if !v.is_finite() {
            return Err(CodecError::NonFinite("quantizer input".into()));
        }
        let r = v.round().clamp(ALPHABET_MIN as f32, ALPHABET_MAX as f32);
        data.push(r as i32);
    }
    Ok(SymbolTensor { geom: latent.geometry(), data })
}

/// One sample of the documented noise stream.
#[inline]
pub fn uniform_noise(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 40) as f64 * (1.0 / (1u64 << 24) as f64) - 0.5
}

pub fn relax_uniform_noise(latent: &Tensor, seed: u64) -> RelaxedTensor {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let values = latent.data().iter().map(|&v| f64::from(v) + uniform_noise(&mut rng)).collect();
    RelaxedTensor { geometry: latent.geometry(), values, seed }
}
