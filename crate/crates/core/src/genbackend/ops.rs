//! Validated calls on top of the raw [`Backend`] requests.

use std::io::Cursor;

use image::{ImageFormat, ImageReader};

use super::protocol::*;
use super::{Backend, BackendError, Result};
use crate::colorcodec::ColorMap;

/// Sampler settings shared by a batch of requests.
#[derive(Clone, PartialEq, Debug)]
pub struct SamplingOptions {
    pub resolution: u32,
    pub text2mask_steps: u32,
    pub mask2img_steps: u32,
    pub extra: serde_json::Value,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            resolution: DEFAULT_RESOLUTION,
            text2mask_steps: TEXT2MASK_STEPS,
            mask2img_steps: MASK2IMG_STEPS,
            extra: serde_json::Value::Null,
        }
    }
}

fn png_dims(bytes: &[u8]) -> Option<(u32, u32)> {
    ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png).into_dimensions().ok()
}

/// Captions a PNG image with the fixed captioner prompt.
pub fn caption(backend: &dyn Backend, image_png: &[u8]) -> Result<String> {
    if png_dims(image_png).is_none() {
        return Err(BackendError::InvalidRequest("caption input is not a readable PNG".into()));
    }
    let resp = backend.caption(&CaptionRequest::new(image_png.to_vec()))?;
    let caption = resp.caption.trim().to_string();
    if caption.is_empty() {
        return Err(BackendError::Protocol("backend returned an empty caption".into()));
    }
    Ok(caption)
}

/// Samples `n` color maps for `prompt`; every map must be square at the
/// configured resolution.
pub fn text2mask(
    backend: &dyn Backend,
    prompt: &str,
    n: u32,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Vec<ColorMap>> {
    if n == 0 {
        return Err(BackendError::InvalidRequest("n must be >= 1".into()));
    }
    let req = Text2MaskRequest {
        prompt: prompt.to_string(),
        n,
        seed,
        resolution: opts.resolution,
        steps: opts.text2mask_steps,
        extra: opts.extra.clone(),
    };
    let resp = backend.text2mask(&req)?;
    if resp.color_maps.len() != n as usize {
        return Err(BackendError::Shape(format!("asked for {n} color maps, got {}", resp.color_maps.len())));
    }
    let res = opts.resolution as usize;
    resp.color_maps
        .iter()
        .map(|png| {
            let map = ColorMap::from_png(png).map_err(|e| BackendError::Protocol(format!("bad color map: {e}")))?;
            if (map.height(), map.width()) != (res, res) {
                return Err(BackendError::Shape(format!(
                    "expected {res}x{res} color map, got {}x{}",
                    map.height(),
                    map.width()
                )));
            }
            Ok(map)
        })
        .collect()
}

/// Samples `n` images conditioned on `colormap`; returns PNG bytes, each with
/// the color map's dimensions.
pub fn mask2img(
    backend: &dyn Backend,
    prompt: &str,
    colormap: &ColorMap,
    n: u32,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Vec<Vec<u8>>> {
    let dims = (colormap.width() as u32, colormap.height() as u32);
    mask2img_png(backend, prompt, &colormap.to_png(), dims, n, seed, opts)
}

/// [`mask2img`] with an already encoded conditioning map of `(width, height)`.
pub(crate) fn mask2img_png(
    backend: &dyn Backend,
    prompt: &str,
    color_map_png: &[u8],
    want: (u32, u32),
    n: u32,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Vec<Vec<u8>>> {
    if n == 0 {
        return Err(BackendError::InvalidRequest("n must be >= 1".into()));
    }
    let req = Mask2ImgRequest {
        prompt: prompt.to_string(),
        color_map: color_map_png.to_vec(),
        n,
        seed,
        steps: opts.mask2img_steps,
        extra: opts.extra.clone(),
    };
    let resp = backend.mask2img(&req)?;
    if resp.images.len() != n as usize {
        return Err(BackendError::Shape(format!("asked for {n} images, got {}", resp.images.len())));
    }
    for img in &resp.images {
        match png_dims(img) {
            None => return Err(BackendError::Protocol("backend returned an unreadable image".into())),
            Some(dims) if dims != want => {
                return Err(BackendError::Shape(format!(
                    "expected {}x{} image, got {}x{}",
                    want.1, want.0, dims.1, dims.0
                )))
            }
            Some(_) => {}
        }
    }
    Ok(resp.images)
}
