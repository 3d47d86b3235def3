//! Single-channel 8-bit PNG encoding of label masks.
//!
//! Masks are written as indexed PNGs whose palette indices are the class ids,
//! so a mask opens as a colour-coded image in any viewer while the stored
//! bytes stay the raw ids. Reading accepts indexed and 8-bit grayscale PNGs.

use std::io::Cursor;

use png::{BitDepth, ColorType, Transformations};
use thiserror::Error;

use crate::mask::{CanonicalClass, LabelMask, MaskError};

#[derive(Debug, Error)]
pub enum MaskIoError {
    #[error("unsupported mask PNG format: {0}")]
    Format(String),
    #[error("corrupt mask PNG: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("failed to encode mask PNG: {0}")]
    Encode(#[from] png::EncodingError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Palette colour for a canonical class id; non-canonical ids are black.
pub fn class_color(id: u8) -> [u8; 3] {
    match CanonicalClass::from_id(id) {
        Some(CanonicalClass::Primary) => [0, 0, 255],
        Some(CanonicalClass::Secondary) => [255, 0, 0],
        Some(CanonicalClass::Sky) => [135, 206, 235],
        Some(CanonicalClass::Road) => [128, 128, 128],
        Some(CanonicalClass::Ignore) => [255, 255, 255],
        Some(CanonicalClass::Other) | None => [0, 0, 0],
    }
}

fn palette() -> Vec<u8> {
    (0..=255u8).flat_map(class_color).collect()
}

pub fn load_mask_png(bytes: &[u8]) -> Result<LabelMask, MaskIoError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let (color, depth, width, height) = {
        let info = reader.info();
        (info.color_type, info.bit_depth, info.width, info.height)
    };
    if !matches!(color, ColorType::Indexed | ColorType::Grayscale) {
        return Err(MaskIoError::Format(format!(
            "expected a single-channel PNG, found {color:?}"
        )));
    }
    if depth != BitDepth::Eight {
        return Err(MaskIoError::Format(format!(
            "expected 8-bit samples, found {depth:?}"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| MaskIoError::Format("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf)?;
    let line = frame.line_size;
    let w = width as usize;
    let data = if line == w {
        buf.truncate(w * height as usize);
        buf
    } else {
        buf.chunks(line)
            .take(height as usize)
            .flat_map(|row| row[..w].iter().copied())
            .collect()
    };
    Ok(LabelMask::new(width, height, data)?)
}

pub fn save_mask_png(mask: &LabelMask) -> Result<Vec<u8>, MaskIoError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, mask.width(), mask.height());
        encoder.set_color(ColorType::Indexed);
        encoder.set_depth(BitDepth::Eight);
        encoder.set_palette(palette());
        let mut writer = encoder.write_header()?;
        writer.write_image_data(mask.data())?;
        writer.finish()?;
    }
    Ok(out)
}
