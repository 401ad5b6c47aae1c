use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ColorType, DynamicImage, ExtendedColorType, ImageDecoder, ImageEncoder, ImageFormat, ImageReader, Limits};

use super::{DataError, Result};

/// Upper bound on decoded side length for untrusted payloads.
const MAX_SIDE: u32 = 16_384;

pub(crate) fn decode(bytes: &[u8]) -> Result<(ColorType, DynamicImage)> {
    let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png);
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_SIDE);
    limits.max_image_height = Some(MAX_SIDE);
    reader.limits(limits);
    let decoder = reader.into_decoder().map_err(|e| DataError::Format(e.to_string()))?;
    let color = decoder.color_type();
    let (w, h) = decoder.dimensions();
    if w == 0 || h == 0 {
        return Err(DataError::Format("zero-sized image".into()));
    }
    let img = DynamicImage::from_decoder(decoder).map_err(|e| DataError::Format(e.to_string()))?;
    Ok((color, img))
}

fn encode(width: usize, height: usize, data: &[u8], color: ExtendedColorType) -> Vec<u8> {
    let mut out = Vec::new();
    // Fixed settings keep payload bytes reproducible.
    PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Adaptive)
        .write_image(data, width as u32, height as u32, color)
        .expect("in-memory PNG encode of a well-formed buffer");
    out
}

/// Encodes a row-major RGB8 buffer.
pub fn encode_rgb_png(width: usize, height: usize, rgb: &[u8]) -> Vec<u8> {
    encode(width, height, rgb, ExtendedColorType::Rgb8)
}

pub(crate) fn encode_gray8_png(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    encode(width, height, gray, ExtendedColorType::L8)
}

pub(crate) fn encode_gray16_png(width: usize, height: usize, gray: &[u16]) -> Vec<u8> {
    let bytes: Vec<u8> = gray.iter().flat_map(|v| v.to_ne_bytes()).collect();
    encode(width, height, &bytes, ExtendedColorType::L16)
}

/// Decodes any 8-bit PNG into `(width, height, rgb)`, dropping alpha and
/// expanding grayscale.
pub fn decode_rgb_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let (_, img) = decode(bytes)?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok((w as usize, h as usize, rgb.into_raw()))
}

/// Returns PNG bytes unchanged and transcodes JPEG photos to RGB PNG.
pub fn image_to_png(bytes: &[u8]) -> Result<Vec<u8>> {
    const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";
    if bytes.starts_with(PNG_MAGIC) {
        return Ok(bytes.to_vec());
    }
    let mut reader = ImageReader::with_format(Cursor::new(bytes), ImageFormat::Jpeg);
    let mut limits = Limits::default();
    limits.max_image_width = Some(MAX_SIDE);
    limits.max_image_height = Some(MAX_SIDE);
    reader.limits(limits);
    let rgb = reader.decode().map_err(|e| DataError::Format(format!("not a PNG or JPEG image: {e}")))?.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(encode_rgb_png(w as usize, h as usize, rgb.as_raw()))
}

/// Strict variant: the PNG must be 8-bit RGB.
pub(crate) fn decode_rgb8_exact(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let (color, img) = decode(bytes)?;
    if color != ColorType::Rgb8 {
        return Err(DataError::Format(format!("expected 8-bit RGB PNG, got {color:?}")));
    }
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok((w as usize, h as usize, rgb.into_raw()))
}
