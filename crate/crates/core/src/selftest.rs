//! Quick runtime property checks backing the `selftest` command.

use std::time::Instant;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::codec::{decode_image, encode_image_detailed, CodingMode, CompressedContainer};
use crate::entropy::{build_quantized_cdf, discretized_mixture_prob, mixture_likelihood_grad, MixtureParams};
use crate::error::Result;
use crate::nn::NetworkWeights;
use crate::quant::{SymbolTensor, ALPHABET_MAX, ALPHABET_MIN};
use crate::rangecoder::{rc_decode, rc_encode};
use crate::tensor::{Geometry, Tensor};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

struct Rng(SplitMix64);

impl Rng {
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    fn below(&mut self, n: usize) -> usize {
        (self.unit() * n as f64) as usize
    }

    fn simplex(&mut self, k: usize, floor: f64) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| floor + self.unit()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn normalization(rng: &mut Rng, cases: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = [1, 2, 3, 5][rng.below(4)];
        let w = rng.simplex(k, 0.0);
        let mu: Vec<f64> = (0..k).map(|_| rng.range(-300.0, 300.0)).collect();
        let sigma: Vec<f64> = (0..k).map(|_| rng.range(0.11, 50.0)).collect();
        let total: f64 = (ALPHABET_MIN..=ALPHABET_MAX).map(|s| discretized_mixture_prob(s, &w, &mu, &sigma)).sum();
        worst = worst.max((total - 1.0).abs());
    }
    Ok((worst <= 1e-6, format!("{cases} mixtures, max |Σp − 1| = {worst:.2e}")))
}

fn gradients(rng: &mut Rng, cases: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let g1 = Geometry::new(1, 1, 1);
    for _ in 0..cases {
        let k = 1 + rng.below(3);
        let s = rng.below(21) as i32 - 10;
        let w = rng.simplex(k, 0.05);
        let mu: Vec<f64> = (0..k).map(|_| f64::from(s) + rng.range(-2.5, 2.5)).collect();
        let sigma: Vec<f64> = (0..k).map(|_| rng.range(0.5, 4.0)).collect();
        let sym = SymbolTensor::new(g1, vec![s])?;
        let grad = mixture_likelihood_grad(&sym, &MixtureParams::new(g1, k, &w, &mu, &sigma)?)?;
        let logp = |w: &[f64], mu: &[f64], sigma: &[f64]| discretized_mixture_prob(s, w, mu, sigma).ln();
        let h = 1e-6;
        for j in 0..k {
            let mut check = |analytic: f64, plus: f64, minus: f64| {
                let fd = (plus - minus) / (2.0 * h);
                if analytic.abs() > 1e-8 {
                    worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
                }
            };
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            check(grad.weights[j], logp(&wp, &mu, &sigma), logp(&wm, &mu, &sigma));
            let (mut mp, mut mm) = (mu.clone(), mu.clone());
            mp[j] += h;
            mm[j] -= h;
            check(grad.means[j], logp(&w, &mp, &sigma), logp(&w, &mm, &sigma));
            let (mut sp, mut sm) = (sigma.clone(), sigma.clone());
            sp[j] += h;
            sm[j] -= h;
            check(grad.scales[j], logp(&w, &mu, &sp), logp(&w, &mu, &sm));
        }
    }
    Ok((worst < 1e-4, format!("{cases} cases, max relative error {worst:.2e}")))
}

fn coder(rng: &mut Rng, sequences: usize) -> Result<(bool, String)> {
    let mut symbols_total = 0;
    for _ in 0..sequences {
        let len = rng.below(2000);
        let alphabet = 2 + rng.below(300);
        let mut symbols = Vec::with_capacity(len);
        let mut tables = Vec::with_capacity(len);
        for _ in 0..len {
            let pmf: Vec<f64> = {
                let raw: Vec<f64> = (0..alphabet).map(|_| rng.unit().powi(4)).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            };
            let t = build_quantized_cdf(&pmf)?;
            symbols.push(t.symbol_for(rng.below(1 << 16) as u32));
            tables.push(t);
        }
        let bytes = rc_encode(&symbols, &tables)?;
        if rc_decode(&bytes, &tables)? != symbols {
            return Ok((false, format!("mismatch on a sequence of {len} symbols")));
        }
        symbols_total += len;
    }
    Ok((true, format!("{sequences} sequences, {symbols_total} symbols")))
}

fn pipeline(rng: &mut Rng, weights: &NetworkWeights) -> Result<(bool, String)> {
    let (h, w) = (1 + rng.below(100), 1 + rng.below(100));
    let freq = rng.range(0.05, 0.5) as f32;
    let img = Tensor::from_fn(Geometry::new(3, h, w), |c, y, x| {
        0.5 + 0.4 * ((x as f32 * freq).sin() * (y as f32 * freq + c as f32).cos())
    });
    for mode in [CodingMode::Hyperprior, CodingMode::Joint] {
        let enc = encode_image_detailed(&img, weights, mode)?;
        let c = CompressedContainer::from_bytes(&enc.container.to_bytes())?;
        let dec = decode_image(&c, weights)?;
        let same = dec.latents.y_hat == enc.latents.y_hat
            && dec.latents.z_hat == enc.latents.z_hat
            && dec.latents.cdf_digests == enc.latents.cdf_digests
            && dec.image.geometry() == img.geometry();
        if !same {
            return Ok((false, format!("{mode} round trip differs at {w}x{h}")));
        }
    }
    Ok((true, format!("hyperprior and joint at {w}x{h}, N={}", weights.config.n)))
}

/// Runs all checks. Without `weights` the pipeline check uses a small
/// randomly initialized model.
pub fn run_selftest(seed: u64, weights: Option<&NetworkWeights>) -> Vec<CheckOutcome> {
    let mut rng = Rng(SplitMix64::seed_from_u64(seed));
    let mut out = vec![
        timed("pmf normalization", || normalization(&mut rng, 1000)),
        timed("gradient check", || gradients(&mut rng, 300)),
        timed("range coder round trip", || coder(&mut rng, 50)),
    ];
    let owned;
    let weights = match weights {
        Some(w) => Some(w),
        None => {
            owned = NetworkWeights::init_random(seed, 16, 3);
            owned.as_ref().ok()
        }
    };
    out.push(match weights {
        Some(w) => timed("pipeline round trip", || pipeline(&mut rng, w)),
        None => CheckOutcome {
            name: "pipeline round trip",
            passed: false,
            detail: "could not initialize weights".into(),
            seconds: 0.0,
        },
    });
    out
}
