use super::{build_quantized_cdf, interval_mass, std_normal_pdf, tails, QuantizedCdfTable};
use crate::error::{CodecError, Result};
use crate::quant::{check_symbol, symbol_index, SymbolTensor, ALPHABET_MAX, ALPHABET_MIN, ALPHABET_SIZE};
use crate::tensor::Geometry;

/// Lower bound applied to every mixture scale.
pub const SIGMA_MIN: f64 = 0.11;

/// Per-element `K`-component Gaussian mixture parameters.
///
/// Constructors take component-major buffers (`[K × C × H × W]`, index
/// `k·len + i`). Storage is element-major so an element's components are
/// contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    geom: Geometry,
    k: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    scales: Vec<f64>,
    clamped: Vec<bool>,
}

fn transpose(src: &[f64], k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for j in 0..k {
        for i in 0..n {
            out[i * k + j] = src[j * n + i];
        }
    }
    out
}

impl MixtureParams {
    /// Validates normalized weights and clamps scales to [`SIGMA_MIN`].
    pub fn new(geom: Geometry, k: usize, weights: &[f64], means: &[f64], scales: &[f64]) -> Result<Self> {
        let n = geom.len();
        Self::check_lengths(k, n, weights, means, scales)?;
        let weights = transpose(weights, k, n);
        for (i, w) in weights.chunks(k).enumerate() {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(CodecError::InvalidParams(format!("element {i}: negative or non-finite weight")));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(CodecError::InvalidParams(format!("element {i}: weights sum to {s}")));
            }
        }
        Self::finish(geom, k, weights, transpose(means, k, n), transpose(scales, k, n))
    }

    /// Builds parameters from raw network outputs: softmax over weight logits,
    /// `exp` on raw scales, then the scale clamp.
    pub fn from_raw(geom: Geometry, k: usize, logits: &[f64], means: &[f64], raw_scales: &[f64]) -> Result<Self> {
        let n = geom.len();
        Self::check_lengths(k, n, logits, means, raw_scales)?;
        let mut weights = transpose(logits, k, n);
        for w in weights.chunks_mut(k) {
            let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !m.is_finite() {
                return Err(CodecError::NonFinite("mixture weight logits".into()));
            }
            let mut s = 0.0;
            for v in w.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            w.iter_mut().for_each(|v| *v /= s);
        }
        let scales: Vec<f64> = transpose(raw_scales, k, n).into_iter().map(f64::exp).collect();
        Self::finish(geom, k, weights, transpose(means, k, n), scales)
    }

    fn check_lengths(k: usize, n: usize, a: &[f64], b: &[f64], c: &[f64]) -> Result<()> {
        if k == 0 {
            return Err(CodecError::InvalidParams("mixture needs K ≥ 1".into()));
        }
        if a.len() != k * n || b.len() != k * n || c.len() != k * n {
            return Err(CodecError::Geometry(format!(
                "expected {} parameters per tensor, got {}/{}/{}",
                k * n,
                a.len(),
                b.len(),
                c.len()
            )));
        }
        Ok(())
    }

    fn finish(geom: Geometry, k: usize, weights: Vec<f64>, means: Vec<f64>, mut scales: Vec<f64>) -> Result<Self> {
        if means.iter().any(|m| !m.is_finite()) {
            return Err(CodecError::NonFinite("mixture means".into()));
        }
        let mut clamped = vec![false; scales.len()];
        for (s, c) in scales.iter_mut().zip(clamped.iter_mut()) {
            if s.is_nan() || *s == f64::INFINITY {
                return Err(CodecError::NonFinite("mixture scales".into()));
            }
            if *s < SIGMA_MIN {
                *s = SIGMA_MIN;
                *c = true;
            }
        }
        Ok(MixtureParams { geom, k, weights, means, scales, clamped })
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn components(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.geom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self, k: usize, i: usize) -> f64 {
        self.weights[i * self.k + k]
    }

    pub fn mean(&self, k: usize, i: usize) -> f64 {
        self.means[i * self.k + k]
    }

    pub fn scale(&self, k: usize, i: usize) -> f64 {
        self.scales[i * self.k + k]
    }

    /// Whether the scale of component `k` at element `i` sat below [`SIGMA_MIN`].
    pub fn scale_clamped(&self, k: usize, i: usize) -> bool {
        self.clamped[i * self.k + k]
    }

    /// `(weights, means, scales)` of element `i`, one entry per component.
    pub fn element(&self, i: usize) -> (&[f64], &[f64], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.weights[r.clone()], &self.means[r.clone()], &self.scales[r])
    }

    pub fn pmf(&self, i: usize) -> Vec<f64> {
        let (w, m, s) = self.element(i);
        mixture_pmf(w, m, s)
    }

    /// Coding table for element `i`.
    pub fn cdf_table(&self, i: usize) -> Result<QuantizedCdfTable> {
        build_quantized_cdf(&self.pmf(i))
    }
}

#[inline]
fn lower_z(symbol: i32, mu: f64, sigma: f64) -> f64 {
    if symbol == ALPHABET_MIN {
        f64::NEG_INFINITY
    } else {
        (f64::from(symbol) - 0.5 - mu) / sigma
    }
}

#[inline]
fn upper_z(symbol: i32, mu: f64, sigma: f64) -> f64 {
    if symbol == ALPHABET_MAX {
        f64::INFINITY
    } else {
        (f64::from(symbol) + 0.5 - mu) / sigma
    }
}

/// Probability of one symbol under one element's mixture. No validation
/// beyond the alphabet check, so it accepts perturbed parameters.
pub fn discretized_mixture_prob(symbol: i32, weights: &[f64], means: &[f64], scales: &[f64]) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(scales)
        .map(|((&w, &mu), &sigma)| w * interval_mass(lower_z(symbol, mu, sigma), upper_z(symbol, mu, sigma)))
        .sum()
}

/// Full alphabet PMF for one element, bit-identical to evaluating
/// [`discretized_mixture_prob`] at every symbol.
pub fn mixture_pmf(weights: &[f64], means: &[f64], scales: &[f64]) -> Vec<f64> {
    let mut pmf = vec![0.0; ALPHABET_SIZE];
    for ((&w, &mu), &sigma) in weights.iter().zip(means).zip(scales) {
        if w == 0.0 {
            continue;
        }
        let reach = 40.0 * sigma + 1.0;
        let lo = ((mu - reach).floor().max(f64::from(ALPHABET_MIN)) as i32).min(ALPHABET_MAX);
        let hi = ((mu + reach).ceil().min(f64::from(ALPHABET_MAX)) as i32).max(ALPHABET_MIN);
        let mut a = lower_z(lo, mu, sigma);
        let mut tail_a = tails(a);
        for s in lo..=hi {
            let b = upper_z(s, mu, sigma);
            let tail_b = tails(b);
            let mass = if a >= 40.0 || b <= -40.0 {
                0.0
            } else if b <= 0.0 {
                tail_b.0 - tail_a.0
            } else if a >= 0.0 {
                tail_a.1 - tail_b.1
            } else {
                1.0 - tail_a.0 - tail_b.1
            };
            pmf[symbol_index(s)] += w * mass;
            a = b;
            tail_a = tail_b;
        }
    }
    pmf
}

/// Per-element probability of each symbol.
pub fn discretized_mixture_likelihood(symbols: &SymbolTensor, params: &MixtureParams) -> Result<Vec<f64>> {
    if symbols.geometry() != params.geometry() {
        return Err(CodecError::Geometry(format!("symbols {} vs params {}", symbols.geometry(), params.geometry())));
    }
    symbols
        .data()
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            check_symbol(s)?;
            let (w, m, sc) = params.element(i);
            Ok(discretized_mixture_prob(s, w, m, sc))
        })
        .collect()
}

/// Gradients of `Σᵢ log pᵢ`, component-major like the constructor inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureGrad {
    pub log_likelihood: f64,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Components whose scale was clamped; their scale gradient is zero.
    pub scale_clamped: Vec<bool>,
    /// Elements whose likelihood underflowed to zero; all their gradients are zero.
    pub underflow: Vec<bool>,
}

/// Analytic gradient of the log-likelihood with respect to the raw weights
/// (treated as free parameters), the means and the scales.
pub fn mixture_likelihood_grad(symbols: &SymbolTensor, params: &MixtureParams) -> Result<MixtureGrad> {
    if symbols.geometry() != params.geometry() {
        return Err(CodecError::Geometry(format!("symbols {} vs params {}", symbols.geometry(), params.geometry())));
    }
    let (n, k) = (params.len(), params.k);
    let mut g = MixtureGrad {
        log_likelihood: 0.0,
        weights: vec![0.0; n * k],
        means: vec![0.0; n * k],
        scales: vec![0.0; n * k],
        scale_clamped: vec![false; n * k],
        underflow: vec![false; n],
    };
    for (i, &s) in symbols.data().iter().enumerate() {
        check_symbol(s)?;
        let (w, mu, sigma) = params.element(i);
        let p = discretized_mixture_prob(s, w, mu, sigma);
        if p <= 0.0 {
            g.underflow[i] = true;
            g.log_likelihood += f64::NEG_INFINITY;
            continue;
        }
        g.log_likelihood += p.ln();
        for j in 0..k {
            let a = lower_z(s, mu[j], sigma[j]);
            let b = upper_z(s, mu[j], sigma[j]);
            let (pa, pb) = (density(a), density(b));
            let idx = j * n + i;
            g.weights[idx] = interval_mass(a, b) / p;
            g.means[idx] = w[j] * (pa - pb) / sigma[j] / p;
            if params.clamped[i * k + j] {
                g.scale_clamped[idx] = true;
            } else {
                g.scales[idx] = w[j] * (pa * finite_or_zero(a) - pb * finite_or_zero(b)) / sigma[j] / p;
            }
        }
    }
    Ok(g)
}

#[inline]
fn density(z: f64) -> f64 {
    if z.is_finite() {
        std_normal_pdf(z)
    } else {
        0.0
    }
}

#[inline]
fn finite_or_zero(z: f64) -> f64 {
    if z.is_finite() {
        z
    } else {
        0.0
    }
}
