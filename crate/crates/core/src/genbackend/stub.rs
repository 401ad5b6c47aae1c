use std::collections::HashMap;
use std::io::Cursor;
use std::sync::Mutex;

use image::{ImageFormat, ImageReader};

use super::protocol::*;
use super::{Backend, BackendError, Result};
use crate::colorcodec::{ColorMap, Palette};

/// Constant-output backend for dry runs and volume tests: every color map is
/// the same two-category split and every image is a flat gray frame, so
/// content-addressed storage collapses all payloads to a handful of files.
#[derive(Debug)]
pub struct StubBackend {
    palette: Palette,
    maps: Mutex<HashMap<u32, Vec<u8>>>,
    images: Mutex<HashMap<(u32, u32), Vec<u8>>>,
}

impl StubBackend {
    pub fn new(palette: Palette) -> Self {
        StubBackend { palette, maps: Mutex::default(), images: Mutex::default() }
    }

    fn split_map(&self, res: u32) -> Vec<u8> {
        let res = res as usize;
        let colors = self.palette.colors();
        let right = colors[colors.len().min(2) - 1];
        let pixels = (0..res * res).map(|i| if i % res < res / 2 { colors[0] } else { right }).collect();
        ColorMap::new(res, res, pixels).expect("resolution is positive").to_png()
    }
}

impl Backend for StubBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo { name: "stub".into(), version: "1".into() }
    }

    fn caption(&self, _req: &CaptionRequest) -> Result<CaptionResponse> {
        Ok(CaptionResponse { caption: "a stub scene".into() })
    }

    fn text2mask(&self, req: &Text2MaskRequest) -> Result<Text2MaskResponse> {
        if req.n == 0 || req.resolution == 0 {
            return Err(BackendError::InvalidRequest("n and resolution must be >= 1".into()));
        }
        let png = self.maps.lock().expect("stub lock").entry(req.resolution).or_insert_with(|| self.split_map(req.resolution)).clone();
        Ok(Text2MaskResponse { color_maps: vec![png; req.n as usize] })
    }

    fn mask2img(&self, req: &Mask2ImgRequest) -> Result<Mask2ImgResponse> {
        let (w, h) = ImageReader::with_format(Cursor::new(&req.color_map), ImageFormat::Png)
            .into_dimensions()
            .map_err(|e| BackendError::InvalidRequest(format!("color_map: {e}")))?;
        let png = self
            .images
            .lock()
            .expect("stub lock")
            .entry((w, h))
            .or_insert_with(|| crate::segdata::encode_rgb_png(w as usize, h as usize, &vec![128; (w * h * 3) as usize]))
            .clone();
        Ok(Mask2ImgResponse { images: vec![png; req.n as usize] })
    }
}
