use super::palette::Rgb;
use super::{CodecError, Result};
use crate::segdata::{decode_rgb_png, encode_rgb_png};

/// H×W RGB raster, row-major.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ColorMap {
    height: usize,
    width: usize,
    pixels: Vec<Rgb>,
}

impl ColorMap {
    pub fn new(height: usize, width: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CodecError::Shape(format!("empty dimensions {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(CodecError::Shape(format!("{} pixels for a {height}x{width} map", pixels.len())));
        }
        Ok(ColorMap { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, color: Rgb) -> Result<Self> {
        Self::new(height, width, vec![color; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn to_rgb_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.0).collect()
    }

    pub fn from_rgb_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(CodecError::Shape(format!("{} bytes for a {height}x{width} RGB map", bytes.len())));
        }
        Self::new(height, width, bytes.chunks_exact(3).map(|c| Rgb([c[0], c[1], c[2]])).collect())
    }

    /// Encodes as an 8-bit RGB PNG.
    pub fn to_png(&self) -> Vec<u8> {
        encode_rgb_png(self.width, self.height, &self.to_rgb_bytes())
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let (w, h, rgb) = decode_rgb_png(bytes)?;
        Self::from_rgb_bytes(h, w, &rgb)
    }
}
