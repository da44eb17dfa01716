//! Forward-only building blocks: convolutions, pixel shuffle, residual and
//! attention blocks.

use rayon::prelude::*;

use crate::error::{CodecError, Result};
use crate::tensor::{Geometry, Tensor};

pub const LEAKY_SLOPE: f32 = 0.01;

#[inline]
pub fn leaky_relu(v: f32) -> f32 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

#[inline]
pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Shape of one convolution in the weight manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Type-A causal mask: taps at and after the kernel center (raster order) are zero.
    pub masked: bool,
}

impl ConvSpec {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Whether tap `(ky, kx)` is forced to zero by the mask.
    pub fn tap_masked(&self, ky: usize, kx: usize) -> bool {
        self.masked && ky * self.kernel + kx >= (self.kernel * self.kernel) / 2
    }
}

/// 2-D convolution with zero "same" padding of `kernel / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub spec: ConvSpec,
    /// `[out × in × k × k]`
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    pub fn new(spec: ConvSpec, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != spec.weight_len() || bias.len() != spec.out_channels {
            return Err(CodecError::BadWeights(format!(
                "{}: expected {} weights and {} biases, got {} and {}",
                spec.name,
                spec.weight_len(),
                spec.out_channels,
                weight.len(),
                bias.len()
            )));
        }
        Ok(Conv2d { spec, weight, bias })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    #[inline]
    fn w(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f32 {
        let k = self.spec.kernel;
        self.weight[((oc * self.spec.in_channels + ic) * k + ky) * k + kx]
    }

    /// Zeroes masked taps.
    pub fn apply_mask(&mut self) {
        let k = self.spec.kernel;
        for oc in 0..self.spec.out_channels {
            for ic in 0..self.spec.in_channels {
                for ky in 0..k {
                    for kx in 0..k {
                        if self.spec.tap_masked(ky, kx) {
                            self.weight[((oc * self.spec.in_channels + ic) * k + ky) * k + kx] = 0.0;
                        }
                    }
                }
            }
        }
    }

    /// Whether every masked tap is exactly zero.
    pub fn mask_respected(&self) -> bool {
        let k = self.spec.kernel;
        (0..self.spec.out_channels).all(|oc| {
            (0..self.spec.in_channels).all(|ic| {
                (0..k * k).all(|t| !self.spec.tap_masked(t / k, t % k) || self.w(oc, ic, t / k, t % k) == 0.0)
            })
        })
    }

    pub fn output_geometry(&self, input: Geometry) -> Geometry {
        let (k, s, p) = (self.spec.kernel, self.spec.stride, self.spec.kernel / 2);
        Geometry::new(self.spec.out_channels, (input.height + 2 * p - k) / s + 1, (input.width + 2 * p - k) / s + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let g = x.geometry();
        if g.channels != self.spec.in_channels {
            return Err(CodecError::Geometry(format!(
                "{} expects {} input channels, got {}",
                self.spec.name, self.spec.in_channels, g.channels
            )));
        }
        if g.height == 0 || g.width == 0 {
            return Err(CodecError::Geometry(format!("{}: empty input", self.spec.name)));
        }
        let og = self.output_geometry(g);
        let mut out = Tensor::zeros(og);
        let plane = og.plane();
        let (k, s, p) = (self.spec.kernel, self.spec.stride, self.spec.kernel / 2);
        let (ih, iw, oh, ow) = (g.height, g.width, og.height, og.width);
        let work = |(oc, dst): (usize, &mut [f32])| {
            dst.fill(self.bias[oc]);
            for ic in 0..self.spec.in_channels {
                let src = x.channel(ic);
                for ky in 0..k {
                    for kx in 0..k {
                        let w = self.w(oc, ic, ky, kx);
                        // Valid output columns: 0 ≤ ox·s + kx − p < iw.
                        let ox0 = if kx < p { (p - kx).div_ceil(s) } else { 0 };
                        let last = iw as isize - 1 + p as isize - kx as isize;
                        if last < 0 {
                            continue;
                        }
                        let ox1 = (last as usize / s + 1).min(ow);
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            let row = &src[iy as usize * iw..(iy as usize + 1) * iw];
                            let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = ox0 + kx - p;
                                for (o, i) in out_row[ox0..ox1].iter_mut().zip(&row[off..off + (ox1 - ox0)]) {
                                    *o += w * *i;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    out_row[ox] += w * row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        };
        let work_per_channel = plane * self.spec.in_channels * k * k;
        if work_per_channel * self.spec.out_channels > 1 << 15 {
            out.data_mut().par_chunks_mut(plane).enumerate().for_each(work);
        } else {
            out.data_mut().chunks_mut(plane).enumerate().for_each(work);
        }
        Ok(out)
    }

    /// Output at a single position `(y, x)` of a stride-1 convolution, reading
    /// only unmasked taps. Accumulates in the same order as [`Conv2d::forward`].
    pub fn forward_at(&self, input: &Tensor, y: usize, x: usize) -> Result<Vec<f32>> {
        let g = input.geometry();
        if g.channels != self.spec.in_channels || self.spec.stride != 1 {
            return Err(CodecError::Geometry(format!("{}: bad single-position query", self.spec.name)));
        }
        let (k, p) = (self.spec.kernel, self.spec.kernel / 2);
        let mut out = self.bias.clone();
        for (oc, acc) in out.iter_mut().enumerate() {
            for ic in 0..self.spec.in_channels {
                for ky in 0..k {
                    let iy = (y + ky) as isize - p as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        if self.spec.tap_masked(ky, kx) {
                            continue;
                        }
                        let ix = (x + kx) as isize - p as isize;
                        if ix < 0 || ix >= g.width as isize {
                            continue;
                        }
                        *acc += self.w(oc, ic, ky, kx) * input.get(ic, iy as usize, ix as usize);
                    }
                }
            }
        }
        Ok(out)
    }

    /// A 1×1 convolution applied to one feature vector.
    pub fn forward_vec(&self, input: &[f32]) -> Result<Vec<f32>> {
        if self.spec.kernel != 1 || input.len() != self.spec.in_channels {
            return Err(CodecError::Geometry(format!("{}: bad vector query", self.spec.name)));
        }
        let mut out = self.bias.clone();
        for (oc, acc) in out.iter_mut().enumerate() {
            let row = &self.weight[oc * self.spec.in_channels..(oc + 1) * self.spec.in_channels];
            for (w, v) in row.iter().zip(input) {
                *acc += w * v;
            }
        }
        Ok(out)
    }
}

/// `[C·r² × H × W] → [C × rH × rW]`, channel `c·r² + i·r + j` landing at
/// offset `(i, j)` of each `r × r` output cell.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let g = x.geometry();
    if r == 0 || !g.channels.is_multiple_of(r * r) {
        return Err(CodecError::Geometry(format!("{} channels not divisible by {}", g.channels, r * r)));
    }
    let og = Geometry::new(g.channels / (r * r), g.height * r, g.width * r);
    Ok(Tensor::from_fn(og, |c, y, xx| x.get(c * r * r + (y % r) * r + xx % r, y / r, xx / r)))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let g = x.geometry();
    if r == 0 || !g.height.is_multiple_of(r) || !g.width.is_multiple_of(r) {
        return Err(CodecError::Geometry(format!("{g} not divisible by {r}")));
    }
    let og = Geometry::new(g.channels * r * r, g.height / r, g.width / r);
    Ok(Tensor::from_fn(og, |c, y, xx| {
        let (base, off) = (c / (r * r), c % (r * r));
        x.get(base, y * r + off / r, xx * r + off % r)
    }))
}

pub(crate) fn check_finite(t: Tensor, layer: &str) -> Result<Tensor> {
    if t.all_finite() {
        Ok(t)
    } else {
        Err(CodecError::NonFinite(format!("layer {layer}")))
    }
}

/// Conv followed by an optional leaky rectifier, with a finiteness check.
pub(crate) fn conv_act(conv: &Conv2d, x: &Tensor, activate: bool) -> Result<Tensor> {
    let mut y = conv.forward(x)?;
    if activate {
        y.map_inplace(leaky_relu);
    }
    check_finite(y, conv.name())
}

/// `x + b(lrelu(a(x)))`
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub a: Conv2d,
    pub b: Conv2d,
}

impl ResidualBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = conv_act(&self.a, x, true)?;
        let mut out = conv_act(&self.b, &h, false)?;
        out.add_assign(x)?;
        check_finite(out, self.b.name())
    }
}

/// `x + trunk(x) ⊙ sigmoid(mask(x))`, with no non-local block.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBlock {
    pub trunk: Vec<ResidualBlock>,
    pub mask: Vec<ResidualBlock>,
    pub mask_out: Conv2d,
}

impl AttentionBlock {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut t = x.clone();
        for rb in &self.trunk {
            t = rb.forward(&t)?;
        }
        let mut m = x.clone();
        for rb in &self.mask {
            m = rb.forward(&m)?;
        }
        let m = conv_act(&self.mask_out, &m, false)?;
        let mut out = x.clone();
        for ((o, tv), mv) in out.data_mut().iter_mut().zip(t.data()).zip(m.data()) {
            *o += tv * sigmoid(*mv);
        }
        check_finite(out, self.mask_out.name())
    }

    /// The trunk branch alone.
    pub fn trunk_forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut t = x.clone();
        for rb in &self.trunk {
            t = rb.forward(&t)?;
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(name: &str, i: usize, o: usize, k: usize, s: usize) -> ConvSpec {
        ConvSpec { name: name.into(), in_channels: i, out_channels: o, kernel: k, stride: s, masked: false }
    }

    /// Direct definition of a zero-padded cross-correlation.
    fn naive(conv: &Conv2d, x: &Tensor) -> Tensor {
        let og = conv.output_geometry(x.geometry());
        let (k, s, p) = (conv.spec.kernel, conv.spec.stride, conv.spec.kernel / 2);
        Tensor::from_fn(og, |oc, oy, ox| {
            let mut acc = conv.bias[oc] as f64;
            for ic in 0..conv.spec.in_channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let ix = (ox * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < x.height() && (ix as usize) < x.width() {
                            acc += conv.w(oc, ic, ky, kx) as f64 * x.get(ic, iy as usize, ix as usize) as f64;
                        }
                    }
                }
            }
            acc as f32
        })
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) % 1000) as f32 / 500.0 - 1.0).collect()
    }

    #[test]
    fn conv_matches_naive() {
        for &(k, s, h, w) in &[(3, 1, 7, 5), (3, 2, 8, 6), (3, 2, 9, 7), (5, 1, 6, 6), (1, 1, 4, 3)] {
            let sp = spec("t", 3, 4, k, s);
            let conv = Conv2d::new(sp.clone(), pseudo(sp.weight_len(), 1), pseudo(4, 2)).unwrap();
            let x = Tensor::from_vec(Geometry::new(3, h, w), pseudo(3 * h * w, 3)).unwrap();
            let a = conv.forward(&x).unwrap();
            let b = naive(&conv, &x);
            assert_eq!(a.geometry(), b.geometry());
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-4, "{u} {v}");
            }
        }
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        let sp = spec("t", 1, 1, 3, 2);
        let conv = Conv2d::new(sp, vec![0.0; 9], vec![0.0]).unwrap();
        assert_eq!(conv.output_geometry(Geometry::new(1, 64, 32)), Geometry::new(1, 32, 16));
    }

    #[test]
    fn shuffle_is_a_bijection() {
        let x = Tensor::from_vec(Geometry::new(8, 3, 5), pseudo(120, 9)).unwrap();
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.geometry(), Geometry::new(2, 6, 10));
        assert_eq!(pixel_unshuffle(&y, 2).unwrap(), x);
        assert!(pixel_shuffle(&Tensor::zeros(Geometry::new(3, 2, 2)), 2).is_err());
    }

    #[test]
    fn masked_single_position_matches_full_conv() {
        let mut sp = spec("ctx", 2, 3, 5, 1);
        sp.masked = true;
        let mut conv = Conv2d::new(sp.clone(), pseudo(sp.weight_len(), 4), pseudo(3, 5)).unwrap();
        conv.apply_mask();
        assert!(conv.mask_respected());
        let x = Tensor::from_vec(Geometry::new(2, 6, 7), pseudo(84, 6)).unwrap();
        let full = conv.forward(&x).unwrap();
        for y in 0..6 {
            for xx in 0..7 {
                let v = conv.forward_at(&x, y, xx).unwrap();
                for (oc, &got) in v.iter().enumerate() {
                    assert_eq!(got, full.get(oc, y, xx));
                }
            }
        }
    }

    #[test]
    fn input_channel_mismatch() {
        let sp = spec("t", 2, 1, 3, 1);
        let conv = Conv2d::new(sp, vec![0.0; 18], vec![0.0]).unwrap();
        assert!(matches!(conv.forward(&Tensor::zeros(Geometry::new(3, 4, 4))), Err(CodecError::Geometry(_))));
    }
}
