//! Shared inputs for the benchmarks.

use gmxc_core::entropy::{build_quantized_cdf, QuantizedCdfTable};
use gmxc_core::{Geometry, Tensor};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// A smooth test card with mild noise, samples on `[0, 1]`.
pub fn test_image(seed: u64, h: usize, w: usize) -> Tensor {
    let mut rng = StdRng::seed_from_u64(seed);
    Tensor::from_fn(Geometry::new(3, h, w), |c, y, x| {
        let v = 0.5 + 0.4 * ((x as f32) * 0.05 + c as f32).sin() * ((y as f32) * 0.03).cos();
        (v + rng.random_range(-0.03..0.03)).clamp(0.0, 1.0)
    })
}

/// Discretized Laplace PMF over `n` symbols centered in the range.
pub fn laplace_pmf(n: usize, scale: f64) -> Vec<f64> {
    let mid = (n / 2) as f64;
    let raw: Vec<f64> = (0..n).map(|i| (-(i as f64 - mid).abs() / scale).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// `count` symbols drawn from `table`'s own distribution.
pub fn sample_symbols(seed: u64, table: &QuantizedCdfTable, count: usize) -> Vec<usize> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count).map(|_| table.symbol_for(rng.random_range(0..1u32 << 16))).collect()
}

pub fn laplace_table(n: usize, scale: f64) -> QuantizedCdfTable {
    build_quantized_cdf(&laplace_pmf(n, scale)).expect("valid pmf")
}
