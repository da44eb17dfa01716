//! The codec pipeline: padding, analysis, quantization, entropy coding and
//! the `GMMC` container.

mod container;
mod pad;
mod pipeline;

pub use container::{
    decode_prior_tables, encode_prior_tables, CodingMode, CompressedContainer, CONTAINER_MAGIC, CONTAINER_VERSION,
};
pub use pad::{pad_reflect, padded_dim};
pub use pipeline::{
    decode_image, decode_latents, encode_image, encode_image_detailed, CodedLatents, DecodeOutput, EncodeOutput,
    RateStats,
};
