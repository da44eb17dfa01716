//! Network parameter bundle, its manifest, random initialization and the
//! `GMXW` weight file.
//!
//! # Weight file layout (little-endian)
//!
//! ```text
//! "GMXW"            4 bytes
//! version           u16   (= 1)
//! N                 u32
//! K                 u32
//! entry count       u32
//! entries           name_len u16, name (UTF-8), dtype u8 (0 = f32), rank u8, dims u32 × rank
//! tensor data       f32 values of every entry, in entry order
//! checksum          u64   FNV-1a of every preceding byte
//! ```
//!
//! Every convolution contributes `<name>.weight` (`[out, in, k, k]`) followed
//! by `<name>.bias` (`[out]`). Entry order is the manifest order of
//! [`manifest`]; a file is accepted only if its entries match the manifest for
//! its `(N, K)` exactly.
//!
//! # Random initialization
//!
//! A SplitMix64 stream seeded with the 64-bit seed is consumed in manifest
//! order. For each convolution, weights are drawn first, then biases, each as
//! `(2u − 1)·b` with `u = (next_u64 >> 11)·2⁻⁵³`. Weights use
//! `b = gain·√(3 / fan_in)`, biases `b = 0.01`. The gain is 1, except 0.5 for
//! the second convolution of every residual block, 8 for `ga.s3.down` and 4 for
//! `ha.c2` (so that random latents spread over several integers). Masked taps
//! are zeroed after drawing.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::layers::{AttentionBlock, Conv2d, ConvSpec, ResidualBlock};
use crate::checksum::fnv1a64;
use crate::error::{CodecError, Result};

pub const WEIGHT_MAGIC: &[u8; 4] = b"GMXW";
pub const WEIGHT_VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
const BIAS_BOUND: f64 = 0.01;
const LATENT_GAIN: f64 = 8.0;
const HYPER_LATENT_GAIN: f64 = 4.0;

/// Channel count `N` and mixture count `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub n: usize,
    pub k: usize,
}

impl ModelConfig {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(CodecError::InvalidParams(format!("N = {n}, K = {k}: both must be ≥ 1")));
        }
        Ok(ModelConfig { n, k })
    }

    /// Channels produced by the fusion network: `3·N·K`.
    pub fn fusion_channels(&self) -> usize {
        3 * self.n * self.k
    }

    pub fn hyper_channels(&self) -> usize {
        2 * self.n
    }

    pub fn context_channels(&self) -> usize {
        2 * self.n
    }

    fn fusion_hidden(&self) -> (usize, usize) {
        ((10 * self.n / 3).max(1), (8 * self.n / 3).max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DownStage {
    pub blocks: Vec<ResidualBlock>,
    pub down: Conv2d,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpStage {
    pub blocks: Vec<ResidualBlock>,
    /// Produces `4·out` channels ahead of a ×2 pixel shuffle.
    pub up: Conv2d,
}

/// Analysis transform: four down stages, attention after the second and fourth.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub stages: Vec<DownStage>,
    pub attention: Vec<AttentionBlock>,
}

/// Synthesis transform: attention on the latent and after the second up stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub attention: Vec<AttentionBlock>,
    pub stages: Vec<UpStage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperAnalysis {
    pub convs: Vec<Conv2d>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperSynthesis {
    pub conv: Conv2d,
    pub ups: Vec<Conv2d>,
}

/// All parameters of the codec networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub config: ModelConfig,
    pub analysis: Analysis,
    pub synthesis: Synthesis,
    pub hyper_analysis: HyperAnalysis,
    pub hyper_synthesis: HyperSynthesis,
    /// 5×5 type-A masked convolution, `N → 2N`.
    pub context: Conv2d,
    /// Three 1×1 convolutions, `4N → 10N/3 → 8N/3 → 3NK`.
    pub fusion: Vec<Conv2d>,
}

/// Builds every layer in manifest order through `make`.
fn assemble(cfg: ModelConfig, make: &mut dyn FnMut(ConvSpec) -> Result<Conv2d>) -> Result<NetworkWeights> {
    let n = cfg.n;
    let mut conv = |name: String, i: usize, o: usize, k: usize, s: usize| {
        make(ConvSpec { name, in_channels: i, out_channels: o, kernel: k, stride: s, masked: false })
    };

    fn res(
        conv: &mut dyn FnMut(String, usize, usize, usize, usize) -> Result<Conv2d>,
        p: &str,
        c: usize,
    ) -> Result<ResidualBlock> {
        Ok(ResidualBlock { a: conv(format!("{p}.a"), c, c, 3, 1)?, b: conv(format!("{p}.b"), c, c, 3, 1)? })
    }
    fn attn(
        conv: &mut dyn FnMut(String, usize, usize, usize, usize) -> Result<Conv2d>,
        p: &str,
        c: usize,
    ) -> Result<AttentionBlock> {
        let trunk = (0..3).map(|i| res(conv, &format!("{p}.trunk{i}"), c)).collect::<Result<_>>()?;
        let mask = (0..3).map(|i| res(conv, &format!("{p}.mask{i}"), c)).collect::<Result<_>>()?;
        let mask_out = conv(format!("{p}.mask_out"), c, c, 1, 1)?;
        Ok(AttentionBlock { trunk, mask, mask_out })
    }

    let mut stages = Vec::new();
    let mut a_attn = Vec::new();
    for s in 0..4 {
        let c = if s == 0 { 3 } else { n };
        let blocks = (0..2).map(|b| res(&mut conv, &format!("ga.s{s}.rb{b}"), c)).collect::<Result<_>>()?;
        let down = conv(format!("ga.s{s}.down"), c, n, 3, 2)?;
        stages.push(DownStage { blocks, down });
        if s == 1 || s == 3 {
            a_attn.push(attn(&mut conv, &format!("ga.attn{}", a_attn.len()), n)?);
        }
    }
    let analysis = Analysis { stages, attention: a_attn };

    let mut s_attn = vec![attn(&mut conv, "gs.attn0", n)?];
    let mut stages = Vec::new();
    for s in 0..4 {
        let out = if s == 3 { 3 } else { n };
        let blocks = (0..2).map(|b| res(&mut conv, &format!("gs.s{s}.rb{b}"), n)).collect::<Result<_>>()?;
        let up = conv(format!("gs.s{s}.up"), n, 4 * out, 3, 1)?;
        stages.push(UpStage { blocks, up });
        if s == 1 {
            s_attn.push(attn(&mut conv, "gs.attn1", n)?);
        }
    }
    let synthesis = Synthesis { attention: s_attn, stages };

    let hyper_analysis = HyperAnalysis {
        convs: vec![
            conv("ha.c0".into(), n, n, 3, 1)?,
            conv("ha.c1".into(), n, n, 3, 2)?,
            conv("ha.c2".into(), n, n, 3, 2)?,
        ],
    };
    let hyper_synthesis = HyperSynthesis {
        conv: conv("hs.c0".into(), n, n, 3, 1)?,
        ups: vec![conv("hs.up0".into(), n, 4 * n, 3, 1)?, conv("hs.up1".into(), n, 4 * cfg.hyper_channels(), 3, 1)?],
    };
    let context = make(ConvSpec {
        name: "ctx.conv".into(),
        in_channels: n,
        out_channels: cfg.context_channels(),
        kernel: 5,
        stride: 1,
        masked: true,
    })?;
    let (h1, h2) = cfg.fusion_hidden();
    let fin = cfg.hyper_channels() + cfg.context_channels();
    let mut fusion = Vec::new();
    for (i, (a, b)) in [(fin, h1), (h1, h2), (h2, cfg.fusion_channels())].into_iter().enumerate() {
        fusion.push(make(ConvSpec {
            name: format!("fuse.c{i}"),
            in_channels: a,
            out_channels: b,
            kernel: 1,
            stride: 1,
            masked: false,
        })?);
    }
    Ok(NetworkWeights { config: cfg, analysis, synthesis, hyper_analysis, hyper_synthesis, context, fusion })
}

/// Every convolution of an `(N, K)` model, in file order.
pub fn manifest(cfg: ModelConfig) -> Vec<ConvSpec> {
    let mut specs = Vec::new();
    assemble(cfg, &mut |spec| {
        specs.push(spec.clone());
        Conv2d::new(spec.clone(), vec![0.0; spec.weight_len()], vec![0.0; spec.out_channels])
    })
    .expect("zero weights always assemble");
    specs
}

fn uniform(rng: &mut SplitMix64, bound: f64) -> f32 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    ((2.0 * u - 1.0) * bound) as f32
}

impl NetworkWeights {
    /// Deterministic random weights; see the module docs for the scheme.
    pub fn init_random(seed: u64, n: usize, k: usize) -> Result<Self> {
        let cfg = ModelConfig::new(n, k)?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        assemble(cfg, &mut |spec| {
            let gain = match spec.name.as_str() {
                "ga.s3.down" => LATENT_GAIN,
                "ha.c2" => HYPER_LATENT_GAIN,
                name if name.ends_with(".b") => 0.5,
                _ => 1.0,
            };
            let bound = gain * (3.0 / spec.fan_in() as f64).sqrt();
            let weight = (0..spec.weight_len()).map(|_| uniform(&mut rng, bound)).collect();
            let bias = (0..spec.out_channels).map(|_| uniform(&mut rng, BIAS_BOUND)).collect();
            let mut conv = Conv2d::new(spec, weight, bias)?;
            conv.apply_mask();
            Ok(conv)
        })
    }

    /// All convolutions in manifest order.
    pub fn convs(&self) -> Vec<&Conv2d> {
        let mut v: Vec<&Conv2d> = Vec::new();
        fn res<'a>(v: &mut Vec<&'a Conv2d>, rb: &'a ResidualBlock) {
            v.push(&rb.a);
            v.push(&rb.b);
        }
        fn attn<'a>(v: &mut Vec<&'a Conv2d>, a: &'a AttentionBlock) {
            a.trunk.iter().for_each(|rb| res(v, rb));
            a.mask.iter().for_each(|rb| res(v, rb));
            v.push(&a.mask_out);
        }
        let mut ai = self.analysis.attention.iter();
        for (s, st) in self.analysis.stages.iter().enumerate() {
            st.blocks.iter().for_each(|rb| res(&mut v, rb));
            v.push(&st.down);
            if s == 1 || s == 3 {
                attn(&mut v, ai.next().expect("analysis attention"));
            }
        }
        attn(&mut v, &self.synthesis.attention[0]);
        for (s, st) in self.synthesis.stages.iter().enumerate() {
            st.blocks.iter().for_each(|rb| res(&mut v, rb));
            v.push(&st.up);
            if s == 1 {
                attn(&mut v, &self.synthesis.attention[1]);
            }
        }
        v.extend(self.hyper_analysis.convs.iter());
        v.push(&self.hyper_synthesis.conv);
        v.extend(self.hyper_synthesis.ups.iter());
        v.push(&self.context);
        v.extend(self.fusion.iter());
        v
    }

    pub fn convs_mut(&mut self) -> Vec<&mut Conv2d> {
        let mut v = Vec::new();
        self.for_each_conv_mut(&mut |c| v.push(c));
        v
    }

    pub fn conv_mut(&mut self, name: &str) -> Option<&mut Conv2d> {
        self.convs_mut().into_iter().find(|c| c.name() == name)
    }

    fn for_each_conv_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Conv2d)) {
        fn res<'a>(f: &mut dyn FnMut(&'a mut Conv2d), rb: &'a mut ResidualBlock) {
            f(&mut rb.a);
            f(&mut rb.b);
        }
        fn attn<'a>(f: &mut dyn FnMut(&'a mut Conv2d), a: &'a mut AttentionBlock) {
            a.trunk.iter_mut().for_each(|rb| res(f, rb));
            a.mask.iter_mut().for_each(|rb| res(f, rb));
            f(&mut a.mask_out);
        }
        let mut ai = self.analysis.attention.iter_mut();
        for (s, st) in self.analysis.stages.iter_mut().enumerate() {
            st.blocks.iter_mut().for_each(|rb| res(f, rb));
            f(&mut st.down);
            if s == 1 || s == 3 {
                attn(f, ai.next().expect("analysis attention"));
            }
        }
        let (first, rest) = self.synthesis.attention.split_at_mut(1);
        attn(f, &mut first[0]);
        let mut late = rest.iter_mut();
        for (s, st) in self.synthesis.stages.iter_mut().enumerate() {
            st.blocks.iter_mut().for_each(|rb| res(f, rb));
            f(&mut st.up);
            if s == 1 {
                attn(f, late.next().expect("synthesis attention"));
            }
        }
        self.hyper_analysis.convs.iter_mut().for_each(&mut *f);
        f(&mut self.hyper_synthesis.conv);
        self.hyper_synthesis.ups.iter_mut().for_each(&mut *f);
        f(&mut self.context);
        self.fusion.iter_mut().for_each(&mut *f);
    }

    /// Checks layer shapes against the manifest and the causal mask.
    pub fn validate(&self) -> Result<()> {
        let expected = manifest(self.config);
        let convs = self.convs();
        if expected.len() != convs.len() {
            return Err(CodecError::BadWeights("layer count does not match the manifest".into()));
        }
        for (spec, conv) in expected.iter().zip(convs) {
            if *spec != conv.spec || conv.weight.len() != spec.weight_len() || conv.bias.len() != spec.out_channels {
                return Err(CodecError::BadWeights(format!("layer {} is inconsistent with the manifest", spec.name)));
            }
            if !conv.mask_respected() {
                return Err(CodecError::BadWeights(format!("layer {} has nonzero masked taps", spec.name)));
            }
            if conv.weight.iter().chain(&conv.bias).any(|v| !v.is_finite()) {
                return Err(CodecError::BadWeights(format!("layer {} has non-finite values", spec.name)));
            }
        }
        Ok(())
    }

    /// Serializes the complete weight file, checksum included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let convs = self.convs();
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.k as u32).to_le_bytes());
        out.extend_from_slice(&(2 * convs.len() as u32).to_le_bytes());
        for c in &convs {
            let s = &c.spec;
            let dims = [s.out_channels, s.in_channels, s.kernel, s.kernel];
            write_entry(&mut out, &format!("{}.weight", s.name), &dims);
            write_entry(&mut out, &format!("{}.bias", s.name), &[s.out_channels]);
        }
        for c in &convs {
            for v in c.weight.iter().chain(&c.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// The trailing checksum of [`NetworkWeights::to_bytes`]; identifies a weight set.
    pub fn checksum(&self) -> u64 {
        let bytes = self.to_bytes();
        u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 + 2 + 12 + 8 || &bytes[..4] != WEIGHT_MAGIC {
            return Err(CodecError::BadWeights("bad magic".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a64(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(CodecError::BadWeights("checksum mismatch (truncated or corrupt file)".into()));
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u16()?;
        if version != WEIGHT_VERSION {
            return Err(CodecError::BadWeights(format!("unsupported version {version}")));
        }
        let cfg = ModelConfig::new(r.u32()? as usize, r.u32()? as usize)
            .map_err(|e| CodecError::BadWeights(e.to_string()))?;
        let count = r.u32()? as usize;
        let expected = manifest(cfg);
        if count != 2 * expected.len() {
            return Err(CodecError::BadWeights(format!(
                "{count} entries, expected {} for N = {}, K = {}",
                2 * expected.len(),
                cfg.n,
                cfg.k
            )));
        }
        for spec in &expected {
            let dims = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
            r.expect_entry(&format!("{}.weight", spec.name), &dims)?;
            r.expect_entry(&format!("{}.bias", spec.name), &[spec.out_channels])?;
        }
        let w = assemble(cfg, &mut |spec| {
            let weight = r.f32s(spec.weight_len())?;
            let bias = r.f32s(spec.out_channels)?;
            Conv2d::new(spec, weight, bias)
        })?;
        if r.pos != body.len() {
            return Err(CodecError::BadWeights("trailing bytes after tensor data".into()));
        }
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

fn write_entry(out: &mut Vec<u8>, name: &str, dims: &[usize]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(DTYPE_F32);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| CodecError::BadWeights("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn expect_entry(&mut self, name: &str, dims: &[usize]) -> Result<()> {
        let len = self.u16()? as usize;
        let got = String::from_utf8_lossy(self.take(len)?).into_owned();
        let dtype = self.u8()?;
        let rank = self.u8()? as usize;
        let got_dims = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if got != name || dtype != DTYPE_F32 || got_dims != dims {
            return Err(CodecError::BadWeights(format!(
                "entry {got} {got_dims:?} (dtype {dtype}) does not match expected {name} {dims:?}"
            )));
        }
        Ok(())
    }
}
