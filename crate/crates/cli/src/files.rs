use std::io::Write;
use std::path::Path;

use gmxc_core::formats::{decode_pnm, decode_tnsr, encode_ppm, encode_tnsr, TnsrArray, TnsrData};
use gmxc_core::{CodecError, Geometry, Result, Tensor};
use tempfile::NamedTempFile;

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CodecError::Io(e.error))?;
    Ok(())
}

pub fn is_tnsr(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tnsr"))
}

pub fn is_image(path: &Path) -> bool {
    path.extension().is_some_and(|e| ["ppm", "pgm", "pnm", "tnsr"].iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Reads an RGB image. TNSR input is f32 `[3, H, W]` or `[H, W]` on `[0, 1]`;
/// grayscale is replicated to three channels.
pub fn read_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    if !is_tnsr(path) {
        return Ok(decode_pnm(&bytes)?.into_rgb());
    }
    let arr = decode_tnsr(&bytes)?;
    let TnsrData::F32(data) = arr.data else {
        return Err(CodecError::Format("image tensors must be f32".into()));
    };
    let t = match arr.dims[..] {
        [3, h, w] => Tensor::from_vec(Geometry::new(3, h, w), data)?,
        [h, w] => Tensor::from_vec(Geometry::new(1, h, w), data)?,
        _ => return Err(CodecError::Format(format!("image tensor dims {:?}, expected [3, H, W]", arr.dims))),
    };
    if t.channels() == 1 {
        let mut rgb = Vec::with_capacity(3 * t.data().len());
        for _ in 0..3 {
            rgb.extend_from_slice(t.data());
        }
        return Tensor::from_vec(Geometry::new(3, t.height(), t.width()), rgb);
    }
    Ok(t)
}

pub fn image_bytes(path: &Path, image: &Tensor) -> Result<Vec<u8>> {
    if is_tnsr(path) {
        let g = image.geometry();
        let arr = TnsrArray::new(vec![g.channels, g.height, g.width], TnsrData::F32(image.data().to_vec()))?;
        Ok(encode_tnsr(&arr))
    } else {
        encode_ppm(image)
    }
}

pub fn symbols_tnsr(geom: Geometry, data: &[i32]) -> Result<Vec<u8>> {
    let arr = TnsrArray::new(vec![geom.channels, geom.height, geom.width], TnsrData::I32(data.to_vec()))?;
    Ok(encode_tnsr(&arr))
}
