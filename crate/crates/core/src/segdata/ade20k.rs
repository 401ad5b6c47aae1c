//! ADE20K-style single-channel annotation PNGs: 0 is unlabeled, value `v`
//! is category `v - 1`.

use image::ColorType;

use super::maps::{Label, SemanticMap};
use super::png::{decode, encode_gray16_png, encode_gray8_png};
use super::{DataError, Result};

pub const ADE20K_CATEGORIES: usize = 150;

/// Loads an ADE20K annotation (8-bit grayscale, values 0..=150).
pub fn load_ade20k_annotation(png_bytes: &[u8]) -> Result<SemanticMap> {
    let map = load_semantic_png(png_bytes, ADE20K_CATEGORIES)?;
    Ok(map)
}

/// Loads a shifted-by-one label PNG (8- or 16-bit grayscale) with
/// `num_categories` classes.
pub fn load_semantic_png(png_bytes: &[u8], num_categories: usize) -> Result<SemanticMap> {
    let (color, img) = decode(png_bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<u32> = match color {
        ColorType::L8 => img.into_luma8().into_raw().into_iter().map(u32::from).collect(),
        ColorType::L16 => img.into_luma16().into_raw().into_iter().map(u32::from).collect(),
        other => return Err(DataError::Format(format!("expected grayscale PNG, got {other:?}"))),
    };
    let labels = values
        .into_iter()
        .map(|v| match v {
            0 => Ok(Label::IGNORE),
            v if (v as usize) <= num_categories => Ok(Label::category((v - 1) as u16)),
            v => Err(DataError::LabelOutOfRange { value: v, limit: num_categories as u32 + 1 }),
        })
        .collect::<Result<Vec<_>>>()?;
    SemanticMap::new(h, w, labels)
}

/// Writes the shifted-by-one encoding; 8-bit when every category fits, else
/// 16-bit.
pub fn save_semantic_png(map: &SemanticMap) -> Vec<u8> {
    let shifted = map.labels().iter().map(|l| l.as_category().map_or(0u32, |c| c as u32 + 1));
    let max = map.labels().iter().filter_map(|l| l.as_category()).max().unwrap_or(0);
    if max < u8::MAX as u16 {
        let gray: Vec<u8> = shifted.map(|v| v as u8).collect();
        encode_gray8_png(map.width(), map.height(), &gray)
    } else {
        let gray: Vec<u16> = shifted.map(|v| v as u16).collect();
        encode_gray16_png(map.width(), map.height(), &gray)
    }
}
