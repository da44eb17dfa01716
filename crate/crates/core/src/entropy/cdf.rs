use crate::error::{CodecError, Result};

/// Bits of probability precision in every coding table.
pub const CDF_PRECISION_BITS: u32 = 16;
/// Total count of every coding table.
pub const CDF_TOTAL: u32 = 1 << CDF_PRECISION_BITS;

/// Integer cumulative counts over an alphabet, totalling [`CDF_TOTAL`].
///
/// `cdf[0] == 0`, `cdf[len] == CDF_TOTAL`, and the sequence is strictly
/// increasing so every symbol owns at least one count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedCdfTable {
    cdf: Vec<u32>,
}

impl QuantizedCdfTable {
    pub fn new(cdf: Vec<u32>) -> Result<Self> {
        if cdf.len() < 2 {
            return Err(CodecError::InvalidParams("cdf needs at least one symbol".into()));
        }
        if cdf[0] != 0 || *cdf.last().unwrap() != CDF_TOTAL {
            return Err(CodecError::InvalidParams(format!("cdf must run from 0 to {CDF_TOTAL}")));
        }
        if cdf.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CodecError::InvalidParams("cdf is not strictly increasing".into()));
        }
        Ok(QuantizedCdfTable { cdf })
    }

    /// Builds the table from per-symbol counts, which must be positive and sum to [`CDF_TOTAL`].
    pub fn from_counts(counts: &[u32]) -> Result<Self> {
        let mut cdf = Vec::with_capacity(counts.len() + 1);
        let mut acc = 0u32;
        cdf.push(0);
        for &c in counts {
            acc = acc.checked_add(c).ok_or_else(|| CodecError::InvalidParams("count overflow".into()))?;
            cdf.push(acc);
        }
        Self::new(cdf)
    }

    /// Skips validation. Callers must uphold the table invariants; the range
    /// coder still reports zero-width symbols rather than misbehaving.
    pub fn from_cdf_unchecked(cdf: Vec<u32>) -> Self {
        QuantizedCdfTable { cdf }
    }

    /// Alphabet size.
    pub fn len(&self) -> usize {
        self.cdf.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cdf(&self) -> &[u32] {
        &self.cdf
    }

    #[inline]
    pub fn start(&self, symbol: usize) -> u32 {
        self.cdf[symbol]
    }

    #[inline]
    pub fn count(&self, symbol: usize) -> u32 {
        self.cdf[symbol + 1] - self.cdf[symbol]
    }

    pub fn counts(&self) -> Vec<u32> {
        self.cdf.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn probability(&self, symbol: usize) -> f64 {
        f64::from(self.count(symbol)) / f64::from(CDF_TOTAL)
    }

    /// The symbol whose interval `[cdf[s], cdf[s+1])` contains `target`.
    #[inline]
    pub fn symbol_for(&self, target: u32) -> usize {
        debug_assert!(target < CDF_TOTAL);
        self.cdf.partition_point(|&c| c <= target) - 1
    }

    pub fn digest(&self) -> u64 {
        let mut h = crate::checksum::Fnv1a64::new();
        for c in &self.cdf {
            h.update(&c.to_le_bytes());
        }
        h.finish()
    }
}

/// Quantizes a PMF to a [`QuantizedCdfTable`].
///
/// Each symbol first gets `max(1, round(p·2¹⁶))` counts. Any surplus is then
/// removed from bins in proportion to their count above one, largest bins
/// first for the remainder; any deficit is added in proportion to the counts.
pub fn build_quantized_cdf(pmf: &[f64]) -> Result<QuantizedCdfTable> {
    let n = pmf.len();
    if n == 0 || n > CDF_TOTAL as usize {
        return Err(CodecError::InvalidParams(format!(
            "alphabet of {n} symbols cannot be coded at {CDF_PRECISION_BITS}-bit precision"
        )));
    }
    if let Some(p) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(CodecError::Domain(format!("invalid probability {p}")));
    }
    let sum: f64 = pmf.iter().sum();
    if sum <= 0.0 {
        return Err(CodecError::Degenerate("pmf has no mass".into()));
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(CodecError::Domain(format!("pmf sums to {sum}")));
    }

    let total = i64::from(CDF_TOTAL);
    let mut counts: Vec<i64> = pmf.iter().map(|p| ((p / sum) * total as f64).round().max(1.0) as i64).collect();
    let diff = total - counts.iter().sum::<i64>();

    if diff != 0 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        if diff > 0 {
            let base: i64 = counts.iter().sum();
            let mut left = diff;
            for c in counts.iter_mut() {
                let add = diff * *c / base;
                *c += add;
                left -= add;
            }
            for &i in order.iter().cycle().take(left as usize) {
                counts[i] += 1;
            }
        } else {
            let excess = -diff;
            let spare: i64 = counts.iter().map(|c| c - 1).sum();
            let mut left = excess;
            for c in counts.iter_mut() {
                let take = excess * (*c - 1) / spare;
                *c -= take;
                left -= take;
            }
            while left > 0 {
                let before = left;
                for &i in &order {
                    if left == 0 {
                        break;
                    }
                    if counts[i] > 1 {
                        counts[i] -= 1;
                        left -= 1;
                    }
                }
                debug_assert!(left < before, "no spare counts left");
            }
        }
    }

    let counts: Vec<u32> = counts.into_iter().map(|c| c as u32).collect();
    QuantizedCdfTable::from_counts(&counts)
}
