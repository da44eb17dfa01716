//! Forward passes of the codec networks.

use super::layers::{check_finite, conv_act, leaky_relu, pixel_shuffle, AttentionBlock};
use super::weights::NetworkWeights;
use crate::entropy::MixtureParams;
use crate::error::{CodecError, Result};
use crate::tensor::{Geometry, Tensor};

/// Total downsampling of the analysis transform.
pub const LATENT_STRIDE: usize = 16;
/// Total downsampling down to the hyper latent.
pub const HYPER_STRIDE: usize = 64;

fn expect_channels(x: &Tensor, channels: usize, what: &str) -> Result<()> {
    if x.channels() != channels {
        return Err(CodecError::Geometry(format!("{what} expects {channels} channels, got {}", x.geometry())));
    }
    Ok(())
}

/// `y = g_a(x)`: `[3, H, W] → [N, H/16, W/16]`, `H` and `W` multiples of 64.
pub fn analysis_forward(x: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(x, 3, "analysis")?;
    let g = x.geometry();
    if g.height == 0 || g.width == 0 || !g.height.is_multiple_of(HYPER_STRIDE) || !g.width.is_multiple_of(HYPER_STRIDE)
    {
        return Err(CodecError::Geometry(format!(
            "analysis input {}×{} is not a nonzero multiple of {HYPER_STRIDE}",
            g.height, g.width
        )));
    }
    let mut h = x.clone();
    let mut attention = w.analysis.attention.iter();
    for (s, stage) in w.analysis.stages.iter().enumerate() {
        for rb in &stage.blocks {
            h = rb.forward(&h)?;
        }
        h = conv_act(&stage.down, &h, s != 3)?;
        if s == 1 || s == 3 {
            h = attention.next().expect("two analysis attention blocks").forward(&h)?;
        }
    }
    Ok(h)
}

/// `x̂ = g_s(ŷ)`: `[N, h, w] → [3, 16h, 16w]`, clamped to `[0, 1]`.
pub fn synthesis_forward(latent: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(latent, w.config.n, "synthesis")?;
    if latent.height() == 0 || latent.width() == 0 {
        return Err(CodecError::Geometry("empty latent".into()));
    }
    let mut h = w.synthesis.attention[0].forward(latent)?;
    for (s, stage) in w.synthesis.stages.iter().enumerate() {
        for rb in &stage.blocks {
            h = rb.forward(&h)?;
        }
        h = pixel_shuffle(&conv_act(&stage.up, &h, false)?, 2)?;
        if s != 3 {
            h.map_inplace(leaky_relu);
        }
        if s == 1 {
            h = w.synthesis.attention[1].forward(&h)?;
        }
    }
    h.map_inplace(|v| v.clamp(0.0, 1.0));
    Ok(h)
}

/// `z = h_a(y)`: `[N, h, w] → [N, h/4, w/4]`.
pub fn hyper_analysis_forward(y: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(y, w.config.n, "hyper analysis")?;
    if y.height() == 0 || y.width() == 0 || !y.height().is_multiple_of(4) || !y.width().is_multiple_of(4) {
        return Err(CodecError::Geometry(format!("latent {} is not a multiple of 4", y.geometry())));
    }
    let c = &w.hyper_analysis.convs;
    let h = conv_act(&c[0], y, true)?;
    let h = conv_act(&c[1], &h, true)?;
    conv_act(&c[2], &h, false)
}

/// `h_s(ẑ)`: `[N, h, w] → [2N, 4h, 4w]` features for the fusion network.
pub fn hyper_synthesis_forward(z: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(z, w.config.n, "hyper synthesis")?;
    if z.height() == 0 || z.width() == 0 {
        return Err(CodecError::Geometry("empty hyper latent".into()));
    }
    let hs = &w.hyper_synthesis;
    let h = conv_act(&hs.conv, z, true)?;
    let mut h = pixel_shuffle(&conv_act(&hs.ups[0], &h, false)?, 2)?;
    h.map_inplace(leaky_relu);
    pixel_shuffle(&conv_act(&hs.ups[1], &h, false)?, 2)
}

/// Context features at `(y, x)` from the masked convolution.
///
/// `populated` counts the raster positions of `latent` already filled in; the
/// causal window of `(y, x)` needs every position before it.
pub fn context_forward(latent: &Tensor, y: usize, x: usize, populated: usize, w: &NetworkWeights) -> Result<Vec<f32>> {
    expect_channels(latent, w.config.n, "context model")?;
    if y >= latent.height() || x >= latent.width() {
        return Err(CodecError::Geometry(format!("position ({y}, {x}) outside {}", latent.geometry())));
    }
    if y * latent.width() + x > populated {
        return Err(CodecError::Usage(format!(
            "context at ({y}, {x}) needs {} decoded positions, only {populated} available",
            y * latent.width() + x
        )));
    }
    w.context.forward_at(latent, y, x)
}

/// Context features for every position at once.
pub fn context_full(latent: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(latent, w.config.n, "context model")?;
    check_finite(w.context.forward(latent)?, w.context.name())
}

/// The `3·N·K`-channel output of the fusion network.
pub fn fusion_raw(hyper: &Tensor, context: &Tensor, w: &NetworkWeights) -> Result<Tensor> {
    expect_channels(hyper, w.config.hyper_channels(), "fusion (hyper features)")?;
    expect_channels(context, w.config.context_channels(), "fusion (context features)")?;
    let h = Tensor::concat_channels(hyper, context)?;
    let h = conv_act(&w.fusion[0], &h, true)?;
    let h = conv_act(&w.fusion[1], &h, true)?;
    conv_act(&w.fusion[2], &h, false)
}

/// Splits raw fusion outputs laid out as `[logits | means | raw scales]`, each
/// block `K·N` channels with component `k` of channel `c` at `k·N + c`.
fn split_params(raw: &[f32], geom: Geometry, k: usize) -> Result<MixtureParams> {
    let block = k * geom.len();
    let vals: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
    MixtureParams::from_raw(geom, k, &vals[..block], &vals[block..2 * block], &vals[2 * block..])
}

/// Mixture parameters for the whole latent. Hyperprior-only mode passes zero context.
pub fn fusion_forward(hyper: &Tensor, context: &Tensor, w: &NetworkWeights) -> Result<MixtureParams> {
    let raw = fusion_raw(hyper, context, w)?;
    let geom = Geometry::new(w.config.n, raw.height(), raw.width());
    split_params(raw.data(), geom, w.config.k)
}

/// Raw fusion output for one position.
pub fn fusion_raw_at(hyper: &[f32], context: &[f32], w: &NetworkWeights) -> Result<Vec<f32>> {
    let mut h: Vec<f32> = hyper.iter().chain(context).copied().collect();
    for (i, conv) in w.fusion.iter().enumerate() {
        h = conv.forward_vec(&h)?;
        if i < 2 {
            h.iter_mut().for_each(|v| *v = leaky_relu(*v));
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::NonFinite("layer fuse.c2".into()));
    }
    Ok(h)
}

/// Mixture parameters for the `N` channels at one position (geometry `[N, 1, 1]`).
pub fn fusion_at(hyper: &[f32], context: &[f32], w: &NetworkWeights) -> Result<MixtureParams> {
    let raw = fusion_raw_at(hyper, context, w)?;
    split_params(&raw, Geometry::new(w.config.n, 1, 1), w.config.k)
}

pub fn attention_forward(x: &Tensor, block: &AttentionBlock) -> Result<Tensor> {
    block.forward(x)
}
