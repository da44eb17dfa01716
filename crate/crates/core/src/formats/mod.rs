//! File formats used around the codec: binary PNM images and raw tensors.

pub mod pnm;
pub mod tnsr;

pub use pnm::{decode_pnm, encode_pgm, encode_ppm, read_pnm, write_pnm, PnmImage};
pub use tnsr::{decode_tnsr, encode_tnsr, read_tnsr, write_tnsr, TnsrArray, TnsrData};
