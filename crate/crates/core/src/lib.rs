//! A learned image codec back end built around discretized Gaussian-mixture
//! entropy models.
//!
//! The crate covers the whole path from pixels to bytes: forward-only neural
//! transforms ([`nn`]), rounding and noise quantization ([`quant`]), mixture
//! and factorized entropy models ([`entropy`]), a 16-bit range coder
//! ([`rangecoder`]), the `GMMC` container and pipeline ([`codec`]), and quality
//! metrics ([`metrics`]).

pub mod checksum;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod nn;
pub mod quant;
pub mod rangecoder;
pub mod selftest;
pub mod tensor;

pub use error::{CodecError, Result};
pub use tensor::{Geometry, Tensor};
