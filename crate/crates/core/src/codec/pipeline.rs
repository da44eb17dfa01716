//! Image → container → image.
//!
//! Coding order: the ẑ stream (prior tables, then ẑ in tensor order) comes
//! first, because the fusion network needs the hyper features. In hyperprior
//! mode ŷ is coded in tensor order (channel, row, column) with all parameters
//! computed in one pass. In joint mode ŷ is coded position by position in
//! raster order, all channels of a position in turn; both encoder and decoder
//! compute each position's parameters from the same serial loop over the
//! symbols already coded.

use rayon::prelude::*;

use super::container::{decode_prior_tables, encode_prior_tables, CodingMode, CompressedContainer};
use super::pad::pad_reflect;
use crate::entropy::{
    discretized_mixture_prob, factorized_likelihood, fit_factorized_prior, rate_from_probabilities, FactorizedPrior,
    MixtureParams, QuantizedCdfTable, LIKELIHOOD_FLOOR,
};
use crate::error::{CodecError, Result};
use crate::nn::{
    analysis_forward, context_forward, fusion_at, fusion_forward, hyper_analysis_forward, hyper_synthesis_forward,
    synthesis_forward, NetworkWeights,
};
use crate::quant::{quantize_round, symbol_index, SymbolTensor, ALPHABET_MIN};
use crate::rangecoder::{RangeDecoder, RangeEncoder};
use crate::tensor::{Geometry, Tensor};

/// Rate accounting for one coded image.
#[derive(Debug, Clone, PartialEq)]
pub struct RateStats {
    /// Original pixel count.
    pub pixels: usize,
    /// Model estimate `Σ −log₂ p` over ŷ.
    pub y_bits_estimated: f64,
    /// Estimate over ẑ under the transported prior (tables excluded).
    pub z_bits_estimated: f64,
    /// Cross-entropy of ŷ under the integer tables actually used by the coder.
    pub y_bits_coded: f64,
    pub z_bits_coded: f64,
    pub y_payload_bytes: usize,
    /// Prior tables plus coded ẑ.
    pub z_payload_bytes: usize,
    pub prior_table_bytes: usize,
}

impl RateStats {
    pub fn payload_bits(&self) -> usize {
        8 * (self.y_payload_bytes + self.z_payload_bytes)
    }

    pub fn bpp(&self) -> f64 {
        self.payload_bits() as f64 / self.pixels as f64
    }

    pub fn bpp_y(&self) -> f64 {
        (8 * self.y_payload_bytes) as f64 / self.pixels as f64
    }

    pub fn bpp_z(&self) -> f64 {
        (8 * self.z_payload_bytes) as f64 / self.pixels as f64
    }
}

/// Everything both sides of the codec agree on, for inspection and testing.
#[derive(Debug, Clone)]
pub struct CodedLatents {
    pub y_hat: SymbolTensor,
    pub z_hat: SymbolTensor,
    /// Model probability of each ŷ symbol, tensor order.
    pub y_probabilities: Vec<f64>,
    /// `−log₂ p` per ŷ element (floored probability), tensor order.
    pub y_bits: Vec<f64>,
    /// Digest of every ŷ coding table, in coding order.
    pub cdf_digests: Vec<u64>,
    pub stats: RateStats,
}

impl CodedLatents {
    /// The per-element `−log₂ p` map as a `[N, h, w]` tensor.
    pub fn bits_map(&self) -> Tensor {
        let data = self.y_bits.iter().map(|&b| b as f32).collect();
        Tensor::from_vec(self.y_hat.geometry(), data).expect("one value per element")
    }
}

pub struct EncodeOutput {
    pub container: CompressedContainer,
    pub latents: CodedLatents,
}

pub struct DecodeOutput {
    pub image: Tensor,
    pub latents: CodedLatents,
}

fn check_mode(mode: CodingMode) -> Result<()> {
    match mode {
        CodingMode::Hyperprior | CodingMode::Joint => Ok(()),
        CodingMode::FactorizedParams => {
            Err(CodecError::Unsupported("the factorized-params mode flag is reserved".into()))
        }
    }
}

/// Hyper-feature vector at one position.
fn column(t: &Tensor, y: usize, x: usize) -> Vec<f32> {
    (0..t.channels()).map(|c| t.get(c, y, x)).collect()
}

fn zero_context(w: &NetworkWeights, h: usize, wd: usize) -> Tensor {
    Tensor::zeros(Geometry::new(w.config.context_channels(), h, wd))
}

fn element_tables(params: &MixtureParams) -> Result<Vec<QuantizedCdfTable>> {
    (0..params.len()).into_par_iter().map(|i| params.cdf_table(i)).collect()
}

pub fn encode_image(x: &Tensor, w: &NetworkWeights, mode: CodingMode) -> Result<CompressedContainer> {
    Ok(encode_image_detailed(x, w, mode)?.container)
}

pub fn encode_image_detailed(x: &Tensor, w: &NetworkWeights, mode: CodingMode) -> Result<EncodeOutput> {
    check_mode(mode)?;
    if x.channels() != 3 {
        return Err(CodecError::Geometry(format!("expected an RGB image, got {}", x.geometry())));
    }
    if !x.all_finite() {
        return Err(CodecError::NonFinite("input image".into()));
    }
    let n = w.config.n;
    let (padded, (height, width)) = pad_reflect(x)?;
    let y = analysis_forward(&padded, w)?;
    let y_hat = quantize_round(&y)?;
    let z = hyper_analysis_forward(&y, w)?;
    let z_hat = quantize_round(&z)?;

    let prior = fit_factorized_prior(&z_hat)?.quantized()?;
    let prior_tables = prior.quantized_tables()?;
    let mut z_payload = encode_prior_tables(&prior_tables);
    let prior_table_bytes = z_payload.len();
    let plane = z_hat.geometry().plane();
    let mut enc = RangeEncoder::new();
    for (i, &s) in z_hat.data().iter().enumerate() {
        enc.encode(symbol_index(s), &prior_tables[i / plane])?;
    }
    z_payload.extend(enc.finish());
    let z_probs = factorized_likelihood(&z_hat, &prior)?;

    let hyper = hyper_synthesis_forward(&z_hat.to_tensor(), w)?;
    let yg = y_hat.geometry();
    let mut enc = RangeEncoder::new();
    let mut cdf_digests = Vec::with_capacity(yg.len());
    let mut y_probs = vec![0.0; yg.len()];
    let mut y_coded_bits = 0.0;
    match mode {
        CodingMode::Hyperprior => {
            let params = fusion_forward(&hyper, &zero_context(w, yg.height, yg.width), w)?;
            let tables = element_tables(&params)?;
            for (i, (&s, t)) in y_hat.data().iter().zip(&tables).enumerate() {
                enc.encode(symbol_index(s), t)?;
                cdf_digests.push(t.digest());
                y_coded_bits -= t.probability(symbol_index(s)).log2();
                let (wt, mu, sc) = params.element(i);
                y_probs[i] = discretized_mixture_prob(s, wt, mu, sc);
            }
        }
        CodingMode::Joint => {
            let y_float = y_hat.to_tensor();
            for py in 0..yg.height {
                for px in 0..yg.width {
                    let pos = py * yg.width + px;
                    let ctx = context_forward(&y_float, py, px, pos, w)?;
                    let params = fusion_at(&column(&hyper, py, px), &ctx, w)?;
                    for c in 0..n {
                        let s = y_hat.get(c, py, px);
                        let t = params.cdf_table(c)?;
                        enc.encode(symbol_index(s), &t)?;
                        cdf_digests.push(t.digest());
                        y_coded_bits -= t.probability(symbol_index(s)).log2();
                        let (wt, mu, sc) = params.element(c);
                        y_probs[yg.index(c, py, px)] = discretized_mixture_prob(s, wt, mu, sc);
                    }
                }
            }
        }
        CodingMode::FactorizedParams => unreachable!(),
    }
    let y_payload = enc.finish();

    let container = CompressedContainer {
        mode,
        n: n as u32,
        k: w.config.k as u32,
        height: height as u32,
        width: width as u32,
        weights_checksum: w.checksum(),
        z_payload,
        y_payload,
    };
    let coded = CodedBits { y: y_coded_bits, z: table_bits(&z_hat, &prior_tables) };
    let latents = summarize(y_hat, z_hat, y_probs, &z_probs, cdf_digests, coded, &container, prior_table_bytes)?;
    Ok(EncodeOutput { container, latents })
}

struct CodedBits {
    y: f64,
    z: f64,
}

/// Cross-entropy of `symbols` under per-channel integer tables.
fn table_bits(symbols: &SymbolTensor, tables: &[QuantizedCdfTable]) -> f64 {
    let plane = symbols.geometry().plane();
    symbols.data().iter().enumerate().map(|(i, &s)| -tables[i / plane].probability(symbol_index(s)).log2()).sum()
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    y_hat: SymbolTensor,
    z_hat: SymbolTensor,
    y_probabilities: Vec<f64>,
    z_probs: &[f64],
    cdf_digests: Vec<u64>,
    coded: CodedBits,
    c: &CompressedContainer,
    prior_table_bytes: usize,
) -> Result<CodedLatents> {
    // Tail symbols can underflow to zero; the floor applies before the log anyway.
    let floored: Vec<f64> = y_probabilities.iter().map(|&p| p.max(LIKELIHOOD_FLOOR)).collect();
    let y_rate = rate_from_probabilities(&floored)?;
    let z_rate = rate_from_probabilities(z_probs)?;
    let stats = RateStats {
        pixels: c.height as usize * c.width as usize,
        y_bits_estimated: y_rate.total_bits,
        z_bits_estimated: z_rate.total_bits,
        y_bits_coded: coded.y,
        z_bits_coded: coded.z,
        y_payload_bytes: c.y_payload.len(),
        z_payload_bytes: c.z_payload.len(),
        prior_table_bytes,
    };
    Ok(CodedLatents { y_hat, z_hat, y_probabilities, y_bits: y_rate.per_element, cdf_digests, stats })
}

/// Decodes the latents only, skipping the synthesis transform.
pub fn decode_latents(c: &CompressedContainer, w: &NetworkWeights) -> Result<CodedLatents> {
    check_mode(c.mode)?;
    let actual = w.checksum();
    if c.weights_checksum != actual || c.n as usize != w.config.n || c.k as usize != w.config.k {
        return Err(CodecError::WeightMismatch { expected: c.weights_checksum, actual });
    }
    let n = w.config.n;
    let ph = super::pad::padded_dim(c.height as usize);
    let pw = super::pad::padded_dim(c.width as usize);
    let zg = Geometry::new(n, ph / crate::nn::HYPER_STRIDE, pw / crate::nn::HYPER_STRIDE);
    let yg = Geometry::new(n, ph / crate::nn::LATENT_STRIDE, pw / crate::nn::LATENT_STRIDE);

    let (prior_tables, z_bytes) = decode_prior_tables(&c.z_payload, n)?;
    let prior = FactorizedPrior::from_tables(&prior_tables)?;
    let mut dec = RangeDecoder::new(z_bytes).map_err(corrupt)?;
    let plane = zg.plane();
    let z_syms = (0..zg.len())
        .map(|i| dec.decode(&prior_tables[i / plane]).map(|s| s as i32 + ALPHABET_MIN))
        .collect::<Result<Vec<_>>>()
        .map_err(corrupt)?;
    let z_hat = SymbolTensor::new(zg, z_syms)?;
    let z_probs = factorized_likelihood(&z_hat, &prior)?;

    let hyper = hyper_synthesis_forward(&z_hat.to_tensor(), w)?;
    let mut dec = RangeDecoder::new(&c.y_payload).map_err(corrupt)?;
    let mut y_hat = SymbolTensor::zeros(yg);
    let mut y_probs = vec![0.0; yg.len()];
    let mut cdf_digests = Vec::with_capacity(yg.len());
    let mut y_coded_bits = 0.0;
    match c.mode {
        CodingMode::Hyperprior => {
            let params = fusion_forward(&hyper, &zero_context(w, yg.height, yg.width), w)?;
            let tables = element_tables(&params)?;
            let mut syms = Vec::with_capacity(yg.len());
            for (i, t) in tables.iter().enumerate() {
                let s = dec.decode(t).map_err(corrupt)? as i32 + ALPHABET_MIN;
                cdf_digests.push(t.digest());
                y_coded_bits -= t.probability(symbol_index(s)).log2();
                let (wt, mu, sc) = params.element(i);
                y_probs[i] = discretized_mixture_prob(s, wt, mu, sc);
                syms.push(s);
            }
            y_hat = SymbolTensor::new(yg, syms)?;
        }
        CodingMode::Joint => {
            let mut y_float = Tensor::zeros(yg);
            for py in 0..yg.height {
                for px in 0..yg.width {
                    let pos = py * yg.width + px;
                    let ctx = context_forward(&y_float, py, px, pos, w)?;
                    let params = fusion_at(&column(&hyper, py, px), &ctx, w)?;
                    for ch in 0..n {
                        let t = params.cdf_table(ch)?;
                        let s = dec.decode(&t).map_err(corrupt)? as i32 + ALPHABET_MIN;
                        cdf_digests.push(t.digest());
                        y_coded_bits -= t.probability(symbol_index(s)).log2();
                        let (wt, mu, sc) = params.element(ch);
                        y_probs[yg.index(ch, py, px)] = discretized_mixture_prob(s, wt, mu, sc);
                        y_hat.set(ch, py, px, s)?;
                        y_float.set(ch, py, px, s as f32);
                    }
                }
            }
        }
        CodingMode::FactorizedParams => unreachable!(),
    }
    let prior_table_bytes = c.z_payload.len() - z_bytes.len();
    let coded = CodedBits { y: y_coded_bits, z: table_bits(&z_hat, &prior_tables) };
    summarize(y_hat, z_hat, y_probs, &z_probs, cdf_digests, coded, c, prior_table_bytes)
}

fn corrupt(e: CodecError) -> CodecError {
    match e {
        CodecError::StreamExhausted => CodecError::Corrupt("entropy-coded stream ended early".into()),
        other => other,
    }
}

/// Reconstructs the image at its original size.
pub fn decode_image(c: &CompressedContainer, w: &NetworkWeights) -> Result<DecodeOutput> {
    let latents = decode_latents(c, w)?;
    let full = synthesis_forward(&latents.y_hat.to_tensor(), w)?;
    let image = full.crop(c.height as usize, c.width as usize)?;
    Ok(DecodeOutput { image, latents })
}
