//! Entropy models for quantized latents.
//!
//! The discretized Gaussian mixture assigns symbol `ŷ` the probability
//!
//! ```text
//! p(ŷ) = Σₖ wₖ · [Φ((ŷ + ½ − μₖ)/σₖ) − Φ((ŷ − ½ − μₖ)/σₖ)]
//! ```
//!
//! over the alphabet `[-255, 256]`. The lowest symbol takes all mass below it
//! (its lower CDF term is replaced by 0) and the highest symbol all mass above
//! it (its upper term is replaced by 1), so the alphabet PMF sums to one.

mod cdf;
mod factorized;
mod mixture;

pub use cdf::{build_quantized_cdf, QuantizedCdfTable, CDF_PRECISION_BITS, CDF_TOTAL};
pub use factorized::{factorized_likelihood, fit_factorized_prior, FactorizedPrior};
pub use mixture::{
    discretized_mixture_likelihood, discretized_mixture_prob, mixture_likelihood_grad, mixture_pmf, MixtureGrad,
    MixtureParams, SIGMA_MIN,
};

use crate::error::{CodecError, Result};
use crate::quant::SymbolTensor;

/// Probabilities are floored here before taking logs in rate estimates.
pub const LIKELIHOOD_FLOOR: f64 = 1.0 / (1u64 << 20) as f64;

/// Standard normal CDF, accurate to well below 1e-12 absolute.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Both tails at a standardized point: `(Φ(z), 1 − Φ(z))`, each computed
/// directly on the side where it is small so neither loses precision.
#[inline]
pub(crate) fn tails(z: f64) -> (f64, f64) {
    if z == f64::NEG_INFINITY {
        (0.0, 1.0)
    } else if z == f64::INFINITY {
        (1.0, 0.0)
    } else if z < 0.0 {
        let lo = std_normal_cdf(z);
        (lo, 1.0 - lo)
    } else {
        let hi = std_normal_cdf(-z);
        (1.0 - hi, hi)
    }
}

/// `Φ(b) − Φ(a)` for standardized bounds `a ≤ b`, either of which may be infinite.
#[inline]
pub(crate) fn interval_mass(a: f64, b: f64) -> f64 {
    // Beyond ±40 every term underflows to zero anyway.
    if a >= 40.0 || b <= -40.0 {
        return 0.0;
    }
    let (lo_a, hi_a) = tails(a);
    let (lo_b, hi_b) = tails(b);
    if b <= 0.0 {
        lo_b - lo_a
    } else if a >= 0.0 {
        hi_a - hi_b
    } else {
        1.0 - lo_a - hi_b
    }
}

/// Total and per-element rate of a set of coded symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub total_bits: f64,
    /// `−log₂ p` per element, in the layout of the symbols.
    pub per_element: Vec<f64>,
}

impl RateEstimate {
    pub fn bits_per_pixel(&self, pixels: usize) -> f64 {
        self.total_bits / pixels as f64
    }
}

/// `Σᵢ −log₂ pᵢ`, with each probability floored at [`LIKELIHOOD_FLOOR`].
pub fn estimate_rate_bits(symbols: &SymbolTensor, probabilities: &[f64]) -> Result<RateEstimate> {
    if symbols.len() != probabilities.len() {
        return Err(CodecError::Geometry(format!(
            "{} symbols but {} probabilities",
            symbols.len(),
            probabilities.len()
        )));
    }
    rate_from_probabilities(probabilities)
}

pub(crate) fn rate_from_probabilities(probabilities: &[f64]) -> Result<RateEstimate> {
    let mut per_element = Vec::with_capacity(probabilities.len());
    for &p in probabilities {
        if !(p > 0.0 && p <= 1.0 + 1e-12) {
            return Err(CodecError::Domain(format!("probability {p} outside (0, 1]")));
        }
        let bits = -p.max(LIKELIHOOD_FLOOR).log2();
        per_element.push(if bits > 0.0 { bits } else { 0.0 });
    }
    let total_bits = per_element.iter().sum();
    Ok(RateEstimate { total_bits, per_element })
}
