//! Boundary handling: pad to the network's size granularity, crop back after decoding.

use crate::error::{CodecError, Result};
use crate::nn::HYPER_STRIDE;
use crate::tensor::{Geometry, Tensor};

/// Smallest multiple of 64 that is ≥ `n`.
pub fn padded_dim(n: usize) -> usize {
    n.div_ceil(HYPER_STRIDE).max(1) * HYPER_STRIDE
}

/// Source index for padded position `i` of a dimension of length `len`.
///
/// Positions past the end mirror back without repeating the edge sample
/// (`len − 2, len − 3, …`). When the padding is longer than the mirror can
/// reach, the remaining positions replicate sample 0.
#[inline]
fn reflect_index(i: usize, len: usize) -> usize {
    if i < len {
        i
    } else {
        (2 * (len as isize - 1) - i as isize).max(0) as usize
    }
}

/// Reflect-pads the bottom and right edges up to multiples of 64 and returns
/// the original `(height, width)`.
pub fn pad_reflect(x: &Tensor) -> Result<(Tensor, (usize, usize))> {
    let g = x.geometry();
    if g.height == 0 || g.width == 0 {
        return Err(CodecError::Geometry(format!("cannot pad an empty image {g}")));
    }
    let pg = Geometry::new(g.channels, padded_dim(g.height), padded_dim(g.width));
    let padded = Tensor::from_fn(pg, |c, y, xx| x.get(c, reflect_index(y, g.height), reflect_index(xx, g.width)));
    Ok((padded, (g.height, g.width)))
}
