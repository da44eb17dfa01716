use super::{build_quantized_cdf, QuantizedCdfTable};
use crate::error::{CodecError, Result};
use crate::quant::{check_symbol, symbol_index, SymbolTensor, ALPHABET_MAX, ALPHABET_MIN, ALPHABET_SIZE};

/// Pseudo-count given to every symbol outside a channel's fitted support.
const OUTSIDE_SUPPORT_WEIGHT: f64 = 1.0 / 256.0;

/// Non-adaptive per-channel PMF over the full alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPrior {
    pmfs: Vec<Vec<f64>>,
}

impl FactorizedPrior {
    /// Each PMF must cover the alphabet, be strictly positive and sum to one.
    pub fn from_pmfs(pmfs: Vec<Vec<f64>>) -> Result<Self> {
        if pmfs.is_empty() {
            return Err(CodecError::EmptyInput("prior with no channels".into()));
        }
        for (c, pmf) in pmfs.iter().enumerate() {
            if pmf.len() != ALPHABET_SIZE {
                return Err(CodecError::InvalidParams(format!(
                    "channel {c}: pmf has {} bins, expected {ALPHABET_SIZE}",
                    pmf.len()
                )));
            }
            if pmf.iter().any(|&p| !p.is_finite() || p <= 0.0) {
                return Err(CodecError::InvalidParams(format!("channel {c}: non-positive bin")));
            }
            let s: f64 = pmf.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(CodecError::InvalidParams(format!("channel {c}: pmf sums to {s}")));
            }
        }
        Ok(FactorizedPrior { pmfs })
    }

    /// The prior a decoder sees after table transport: `pᵢ = countᵢ / 2¹⁶`.
    pub fn from_tables(tables: &[QuantizedCdfTable]) -> Result<Self> {
        let pmfs = tables
            .iter()
            .map(|t| {
                if t.len() != ALPHABET_SIZE {
                    return Err(CodecError::InvalidParams(format!(
                        "table covers {} symbols, expected {ALPHABET_SIZE}",
                        t.len()
                    )));
                }
                Ok((0..t.len()).map(|s| t.probability(s)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_pmfs(pmfs)
    }

    pub fn channels(&self) -> usize {
        self.pmfs.len()
    }

    pub fn pmf(&self, channel: usize) -> &[f64] {
        &self.pmfs[channel]
    }

    pub fn probability(&self, channel: usize, symbol: i32) -> Result<f64> {
        check_symbol(symbol)?;
        Ok(self.pmfs[channel][symbol_index(symbol)])
    }

    pub fn quantized_tables(&self) -> Result<Vec<QuantizedCdfTable>> {
        self.pmfs.iter().map(|p| build_quantized_cdf(p)).collect()
    }

    /// Round-trips the prior through its quantized tables.
    pub fn quantized(&self) -> Result<Self> {
        Self::from_tables(&self.quantized_tables()?)
    }
}

/// Fits one smoothed histogram per channel.
///
/// Within the occupied range widened by one symbol on each side every bin gets
/// its count plus one; bins outside get [`OUTSIDE_SUPPORT_WEIGHT`]. The result
/// is renormalized.
pub fn fit_factorized_prior(samples: &SymbolTensor) -> Result<FactorizedPrior> {
    let geom = samples.geometry();
    if samples.is_empty() {
        return Err(CodecError::EmptyInput("no samples to fit a prior".into()));
    }
    let plane = geom.plane();
    let pmfs = samples
        .data()
        .chunks(plane)
        .map(|channel| {
            let mut hist = vec![0u64; ALPHABET_SIZE];
            for &s in channel {
                check_symbol(s)?;
                hist[symbol_index(s)] += 1;
            }
            let lo = channel.iter().min().copied().unwrap_or(0).saturating_sub(1).max(ALPHABET_MIN);
            let hi = channel.iter().max().copied().unwrap_or(0).saturating_add(1).min(ALPHABET_MAX);
            let mut weights: Vec<f64> =
                (ALPHABET_MIN..=ALPHABET_MAX)
                    .map(|s| {
                        if (lo..=hi).contains(&s) {
                            hist[symbol_index(s)] as f64 + 1.0
                        } else {
                            OUTSIDE_SUPPORT_WEIGHT
                        }
                    })
                    .collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            Ok(weights)
        })
        .collect::<Result<Vec<_>>>()?;
    FactorizedPrior::from_pmfs(pmfs)
}

pub fn factorized_likelihood(symbols: &SymbolTensor, prior: &FactorizedPrior) -> Result<Vec<f64>> {
    let geom = symbols.geometry();
    if geom.channels != prior.channels() {
        return Err(CodecError::Geometry(format!(
            "{} channels against a {}-channel prior",
            geom.channels,
            prior.channels()
        )));
    }
    let plane = geom.plane();
    symbols.data().iter().enumerate().map(|(i, &s)| prior.probability(i / plane.max(1), s)).collect()
}
