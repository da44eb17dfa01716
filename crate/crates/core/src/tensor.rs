//! Dense channel-major `[C × H × W]` tensors.

use crate::error::{CodecError, Result};

/// A `[channels × height × width]` shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Geometry { channels, height, width }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl std::fmt::Display for Geometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}×{}×{}", self.channels, self.height, self.width)
    }
}

/// Real-valued feature map, latent or image.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    geom: Geometry,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(geom: Geometry) -> Self {
        Tensor { geom, data: vec![0.0; geom.len()] }
    }

    pub fn filled(geom: Geometry, value: f32) -> Self {
        Tensor { geom, data: vec![value; geom.len()] }
    }

    pub fn from_vec(geom: Geometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geom.len() {
            return Err(CodecError::Geometry(format!("{} values do not fill a {geom} tensor", data.len())));
        }
        Ok(Tensor { geom, data })
    }

    pub fn from_fn(geom: Geometry, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(geom.len());
        for c in 0..geom.channels {
            for y in 0..geom.height {
                for x in 0..geom.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Tensor { geom, data }
    }

    pub fn geometry(&self) -> Geometry {
        self.geom
    }

    pub fn channels(&self) -> usize {
        self.geom.channels
    }

    pub fn height(&self) -> usize {
        self.geom.height
    }

    pub fn width(&self) -> usize {
        self.geom.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.geom.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.geom.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let p = self.geom.plane();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let p = self.geom.plane();
        &mut self.data[c * p..(c + 1) * p]
    }

    pub fn map_inplace(&mut self, f: impl Fn(f32) -> f32) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.ensure_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn ensure_same(&self, other: &Tensor) -> Result<()> {
        if self.geom != other.geom {
            return Err(CodecError::Geometry(format!("shape mismatch {} vs {}", self.geom, other.geom)));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.height() != b.height() || a.width() != b.width() {
            return Err(CodecError::Geometry(format!("cannot concatenate {} with {}", a.geom, b.geom)));
        }
        let geom = Geometry::new(a.channels() + b.channels(), a.height(), a.width());
        let mut data = Vec::with_capacity(geom.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Tensor { geom, data })
    }

    /// Top-left `height × width` window of every channel.
    pub fn crop(&self, height: usize, width: usize) -> Result<Tensor> {
        if height > self.height() || width > self.width() {
            return Err(CodecError::Geometry(format!("crop {height}×{width} larger than {}", self.geom)));
        }
        let geom = Geometry::new(self.channels(), height, width);
        Ok(Tensor::from_fn(geom, |c, y, x| self.get(c, y, x)))
    }
}
