//! Quality metrics and the rate-distortion objective.
//!
//! Images are `[C, H, W]` tensors with samples on `[0, 1]`; MSE is computed on
//! that scale with no rescaling to 8-bit units.

use std::fmt;
use std::str::FromStr;

use crate::error::{CodecError, Result};
use crate::tensor::Tensor;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub const LAMBDAS_MSE: [f64; 6] = [0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045];
pub const LAMBDAS_MS_SSIM: [f64; 4] = [3.0, 12.0, 40.0, 120.0];

pub fn mse(x: &Tensor, y: &Tensor) -> Result<f64> {
    x.ensure_same(y)?;
    if x.data().is_empty() {
        return Err(CodecError::EmptyInput("image has no samples".into()));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / x.data().len() as f64)
}

/// PSNR in dB with peak 1. Identical images give `f64::INFINITY`.
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    let m = mse(x, y)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Number of scales usable for an image whose smaller side is `min_dim`.
pub fn ms_ssim_scales(min_dim: usize) -> usize {
    (0..MS_SSIM_WEIGHTS.len()).take_while(|&s| min_dim >> s >= SSIM_WINDOW).count()
}

#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

impl Plane {
    /// Separable valid-mode Gaussian filter.
    fn blur(&self, g: &[f64; SSIM_WINDOW]) -> Plane {
        let ow = self.w + 1 - SSIM_WINDOW;
        let oh = self.h + 1 - SSIM_WINDOW;
        let mut rows = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let src = &self.v[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                rows[y * ow + x] = g.iter().zip(&src[x..]).map(|(a, b)| a * b).sum();
            }
        }
        let mut v = vec![0.0; oh * ow];
        for y in 0..oh {
            for (k, gk) in g.iter().enumerate() {
                let src = &rows[(y + k) * ow..(y + k + 1) * ow];
                for (o, s) in v[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += gk * s;
                }
            }
        }
        Plane { h: oh, w: ow, v }
    }

    fn mul(&self, other: &Plane) -> Plane {
        let v = self.v.iter().zip(&other.v).map(|(a, b)| a * b).collect();
        Plane { h: self.h, w: self.w, v }
    }

    fn pool(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut v = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.w + 2 * x;
                v.push(0.25 * (self.v[i] + self.v[i + 1] + self.v[i + self.w] + self.v[i + self.w + 1]));
            }
        }
        Plane { h, w, v }
    }
}

/// Mean luminance term and mean contrast-structure term of one scale.
fn ssim_terms(a: &Plane, b: &Plane, g: &[f64; SSIM_WINDOW]) -> (f64, f64) {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let ma = a.blur(g);
    let mb = b.blur(g);
    let saa = a.mul(a).blur(g);
    let sbb = b.mul(b).blur(g);
    let sab = a.mul(b).blur(g);
    let n = ma.v.len() as f64;
    let (mut lum, mut cs) = (0.0, 0.0);
    for i in 0..ma.v.len() {
        let (mu_a, mu_b) = (ma.v[i], mb.v[i]);
        let va = saa.v[i] - mu_a * mu_a;
        let vb = sbb.v[i] - mu_b * mu_b;
        let cov = sab.v[i] - mu_a * mu_b;
        let c = (2.0 * cov + c2) / (va + vb + c2);
        lum += (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1) * c;
        cs += c;
    }
    (lum / n, cs / n)
}

/// Multi-scale SSIM, averaged over channels.
///
/// Uses as many of the five scales as the image supports (each scale must be
/// at least as large as the window) and renormalizes their weights.
pub fn ms_ssim(x: &Tensor, y: &Tensor) -> Result<f64> {
    x.ensure_same(y)?;
    let geom = x.geometry();
    let scales = ms_ssim_scales(geom.height.min(geom.width));
    if scales == 0 {
        return Err(CodecError::Geometry(format!(
            "{geom} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} MS-SSIM window"
        )));
    }
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let g = gaussian_window();
    let mut total = 0.0;
    for c in 0..geom.channels {
        let plane = |t: &Tensor| Plane {
            h: geom.height,
            w: geom.width,
            v: t.channel(c).iter().map(|&v| f64::from(v)).collect(),
        };
        let (mut a, mut b) = (plane(x), plane(y));
        let mut value = 1.0;
        for (s, &w) in MS_SSIM_WEIGHTS.iter().enumerate().take(scales) {
            let (lum, cs) = ssim_terms(&a, &b, &g);
            let weight = w / wsum;
            let term = if s + 1 == scales { lum } else { cs };
            value *= term.max(0.0).powf(weight);
            if s + 1 < scales {
                a = a.pool();
                b = b.pool();
            }
        }
        total += value;
    }
    Ok((total / geom.channels as f64).clamp(0.0, 1.0))
}

/// `−10·log₁₀(1 − m)`; `m = 1` gives `f64::INFINITY`.
pub fn ms_ssim_db(m: f64) -> f64 {
    if m >= 1.0 {
        f64::INFINITY
    } else {
        -10.0 * (1.0 - m).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionMetric {
    Mse,
    MsSsim,
}

impl DistortionMetric {
    pub fn name(self) -> &'static str {
        match self {
            DistortionMetric::Mse => "mse",
            DistortionMetric::MsSsim => "ms-ssim",
        }
    }

    pub fn lambda_presets(self) -> &'static [f64] {
        match self {
            DistortionMetric::Mse => &LAMBDAS_MSE,
            DistortionMetric::MsSsim => &LAMBDAS_MS_SSIM,
        }
    }

    /// The distortion term: MSE, or `1 − MS-SSIM`.
    pub fn distortion(self, x: &Tensor, y: &Tensor) -> Result<f64> {
        match self {
            DistortionMetric::Mse => mse(x, y),
            DistortionMetric::MsSsim => Ok(1.0 - ms_ssim(x, y)?),
        }
    }
}

impl FromStr for DistortionMetric {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" | "psnr" => Ok(DistortionMetric::Mse),
            "ms-ssim" | "msssim" | "ms_ssim" => Ok(DistortionMetric::MsSsim),
            _ => Err(CodecError::Usage(format!("unknown metric {s:?} (expected mse or ms-ssim)"))),
        }
    }
}

impl fmt::Display for DistortionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts any finite positive λ; the presets are the usual operating points.
pub fn validate_lambda(lambda: f64) -> Result<f64> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(CodecError::Usage(format!("λ must be finite and positive, got {lambda}")))
    }
}

/// `R_y + R_z + λ·D`, rates in bits per pixel.
pub fn rd_loss(rate_y: f64, rate_z: f64, distortion: f64, lambda: f64) -> Result<f64> {
    if !(rate_y >= 0.0 && rate_z >= 0.0) {
        return Err(CodecError::Domain(format!("negative rate ({rate_y}, {rate_z})")));
    }
    validate_lambda(lambda).map_err(|_| CodecError::Domain(format!("λ must be positive, got {lambda}")))?;
    if !distortion.is_finite() || distortion < 0.0 {
        return Err(CodecError::Domain(format!("distortion {distortion}")));
    }
    Ok(rate_y + rate_z + lambda * distortion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdReport {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub rate_bpp: f64,
    pub psnr_db: f64,
    pub ms_ssim: Option<f64>,
    pub metric: DistortionMetric,
    pub lambda: f64,
    pub loss: f64,
    pub encode_seconds: f64,
    pub decode_seconds: f64,
}

impl RdReport {
    /// Computes all metrics for one original/reconstruction pair. MS-SSIM is
    /// left out when the image is smaller than the window.
    pub fn evaluate(
        name: &str,
        original: &Tensor,
        decoded: &Tensor,
        rate_y: f64,
        rate_z: f64,
        metric: DistortionMetric,
        lambda: f64,
    ) -> Result<Self> {
        let ms = if ms_ssim_scales(original.height().min(original.width())) > 0 {
            Some(ms_ssim(original, decoded)?)
        } else {
            None
        };
        let distortion = match (metric, ms) {
            (DistortionMetric::MsSsim, Some(m)) => 1.0 - m,
            (DistortionMetric::MsSsim, None) => return Err(CodecError::Geometry("image too small for MS-SSIM".into())),
            (DistortionMetric::Mse, _) => mse(original, decoded)?,
        };
        Ok(RdReport {
            name: name.to_string(),
            width: original.width(),
            height: original.height(),
            rate_bpp: rate_y + rate_z,
            psnr_db: psnr(original, decoded)?,
            ms_ssim: ms,
            metric,
            lambda,
            loss: rd_loss(rate_y, rate_z, distortion, lambda)?,
            encode_seconds: 0.0,
            decode_seconds: 0.0,
        })
    }

    pub fn ms_ssim_db(&self) -> Option<f64> {
        self.ms_ssim.map(ms_ssim_db)
    }

    pub fn csv_header() -> &'static str {
        "name,width,height,bpp,psnr_db,ms_ssim,ms_ssim_db,metric,lambda,loss,encode_s,decode_s"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{:.4},{},{},{},{},{:.6},{:.3},{:.3}",
            self.name,
            self.width,
            self.height,
            self.rate_bpp,
            self.psnr_db,
            opt(self.ms_ssim),
            opt(self.ms_ssim_db()),
            self.metric,
            self.lambda,
            self.loss,
            self.encode_seconds,
            self.decode_seconds
        )
    }

    pub fn key_values(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "n/a".into());
        format!(
            "name={}\nsize={}x{}\nbpp={:.6}\npsnr_db={:.4}\nms_ssim={}\nms_ssim_db={}\nmetric={}\nlambda={}\nloss={:.6}\n",
            self.name,
            self.width,
            self.height,
            self.rate_bpp,
            self.psnr_db,
            opt(self.ms_ssim),
            opt(self.ms_ssim_db()),
            self.metric,
            self.lambda,
            self.loss
        )
    }
}
