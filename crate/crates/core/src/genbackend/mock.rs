//! Deterministic stand-ins for the generative models.
//!
//! - captions are phrase templates picked by the image's content hash;
//! - color maps are seeded Voronoi partitions painted with palette colors
//!   plus bounded per-pixel noise that nearest-color decoding must undo;
//! - images blend the conditioning color with a procedural texture keyed by
//!   the local color, so every segment gets its own look.
//!
//! Every response is a pure function of the request.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::protocol::*;
use super::{Backend, BackendError, Result};
use crate::colorcodec::{ColorMap, Palette, Rgb};
use crate::seeds::SeedHasher;

pub const DEFAULT_MAX_MOCK_CATEGORIES: usize = 12;
const MOCK_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq)]
pub struct MockConfig {
    /// Upper bound on distinct categories per generated color map.
    pub max_categories: usize,
    /// Per-channel noise amplitude; `None` uses the palette's safe maximum.
    pub channel_noise: Option<u8>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig { max_categories: DEFAULT_MAX_MOCK_CATEGORIES, channel_noise: None }
    }
}

#[derive(Clone, Debug)]
pub struct MockBackend {
    palette: Palette,
    config: MockConfig,
}

const ADJECTIVES: [&str; 16] = [
    "sunlit", "quiet", "crowded", "narrow", "spacious", "cozy", "rustic", "modern", "foggy", "bright",
    "dim", "old", "colorful", "empty", "busy", "wooden",
];
const SUBJECTS: [&str; 32] = [
    "kitchen", "bedroom", "street", "living room", "office", "garden", "beach", "mountain trail", "market",
    "bathroom", "library", "harbor", "classroom", "forest path", "courtyard", "train station", "bridge",
    "river bank", "parking lot", "dining room", "hallway", "rooftop", "field", "playground", "lobby",
    "restaurant", "stadium", "shop", "church", "farmyard", "alley", "lake shore",
];
const OBJECTS: [&str; 32] = [
    "chairs", "a table", "trees", "cars", "a sofa", "lamps", "people", "a bed", "windows", "plants",
    "bicycles", "a fence", "shelves", "boats", "a counter", "paintings", "a rug", "benches", "a door",
    "buildings", "a sink", "cabinets", "flowers", "a staircase", "curtains", "a mirror", "rocks",
    "umbrellas", "a clock", "signs", "a fountain", "barrels",
];
const DETAILS: [&str; 16] = [
    "in the morning", "at dusk", "under a cloudy sky", "at night", "in warm light", "after rain",
    "in winter", "on a summer day", "seen from above", "in the distance", "up close", "by a window",
    "near a wall", "in soft shadow", "at noon", "in spring",
];

impl MockBackend {
    pub fn new(palette: Palette, config: MockConfig) -> Self {
        MockBackend { palette, config }
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn noise(&self) -> u8 {
        self.config.channel_noise.unwrap_or_else(|| self.palette.max_channel_noise())
    }

    fn voronoi_map(&self, req: &Text2MaskRequest, index: u32) -> ColorMap {
        let res = req.resolution as usize;
        let mut rng = SeedHasher::new("mock.text2mask")
            .str(&req.prompt)
            .u64(req.seed)
            .u64(index as u64)
            .u64(req.resolution as u64)
            .u64(req.steps as u64)
            .rng();
        let available = self.palette.num_categories().min(res * res);
        let hi = self.config.max_categories.clamp(1, available);
        let lo = 2.min(hi);
        let distinct = rng.random_range(lo..=hi);
        let categories: Vec<usize> = sample(&mut rng, self.palette.num_categories(), distinct).into_vec();
        // Extra sites reuse the chosen categories to give non-convex regions.
        let num_sites = (distinct + rng.random_range(0..=distinct)).min(res * res);
        let positions: Vec<usize> = sample(&mut rng, res * res, num_sites).into_vec();
        let sites: Vec<(i64, i64, Rgb)> = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let cat = if i < distinct { categories[i] } else { categories[rng.random_range(0..distinct)] };
                ((p / res) as i64, (p % res) as i64, self.palette.colors()[cat])
            })
            .collect();

        let amp = self.noise() as i32;
        let mut pixels = Vec::with_capacity(res * res);
        for r in 0..res as i64 {
            for c in 0..res as i64 {
                // Site pixels are at distance 0 from themselves, so every
                // chosen category owns at least one pixel.
                let (_, _, color) = sites
                    .iter()
                    .min_by_key(|(sr, sc, _)| (sr - r).pow(2) + (sc - c).pow(2))
                    .expect("at least one site");
                let mut px = *color;
                if amp > 0 {
                    for ch in px.0.iter_mut() {
                        *ch = (*ch as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8;
                    }
                }
                pixels.push(px);
            }
        }
        ColorMap::new(res, res, pixels).expect("resolution is positive")
    }

    fn render(&self, req: &Mask2ImgRequest, cond: &ColorMap, index: u32) -> Vec<u8> {
        let base = SeedHasher::new("mock.mask2img").str(&req.prompt).u64(req.seed).u64(index as u64).u64(req.steps as u64);
        let mut textures: HashMap<Rgb, Texture> = HashMap::new();
        let mut out = Vec::with_capacity(cond.pixels().len() * 3);
        for r in 0..cond.height() {
            for c in 0..cond.width() {
                let color = cond.get(r, c);
                let tex = textures
                    .entry(color)
                    .or_insert_with(|| Texture::new(&mut base.clone().bytes(&color.0).rng()));
                out.extend_from_slice(&tex.shade(color, r as i32, c as i32));
            }
        }
        crate::segdata::encode_rgb_png(cond.width(), cond.height(), &out)
    }
}

/// Integer-only triangle-wave texture so output bytes do not depend on the
/// platform's float math.
struct Texture {
    fx: i32,
    fy: i32,
    phase: i32,
    period: i32,
    amplitude: i32,
    tint: [i32; 3],
}

impl Texture {
    fn new(rng: &mut impl Rng) -> Self {
        Texture {
            fx: rng.random_range(1..=7),
            fy: rng.random_range(1..=7),
            phase: rng.random_range(0..64),
            period: rng.random_range(8..=32),
            amplitude: rng.random_range(8..=40),
            tint: [rng.random_range(0..=255), rng.random_range(0..=255), rng.random_range(0..=255)],
        }
    }

    fn shade(&self, color: Rgb, row: i32, col: i32) -> [u8; 3] {
        let t = (self.fx * col + self.fy * row + self.phase).rem_euclid(self.period);
        let tri = (2 * t - self.period).abs() * 2 - self.period; // in [-period, period]
        let wave = tri * self.amplitude / self.period;
        let mut px = [0u8; 3];
        for ch in 0..3 {
            let v = (color.0[ch] as i32 * 7 + self.tint[ch] * 3) / 10 + wave;
            px[ch] = v.clamp(0, 255) as u8;
        }
        px
    }
}

impl Backend for MockBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo { name: "mock".into(), version: MOCK_VERSION.into() }
    }

    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse> {
        let d = Sha256::new().chain_update(req.prompt_template.as_bytes()).chain_update(&req.image).finalize();
        let caption = format!(
            "a {} {} with {} and {} {}",
            ADJECTIVES[d[0] as usize % ADJECTIVES.len()],
            SUBJECTS[d[1] as usize % SUBJECTS.len()],
            OBJECTS[d[2] as usize % OBJECTS.len()],
            OBJECTS[(d[2] as usize + 1 + d[3] as usize % (OBJECTS.len() - 1)) % OBJECTS.len()],
            DETAILS[d[4] as usize % DETAILS.len()],
        );
        Ok(CaptionResponse { caption })
    }

    fn text2mask(&self, req: &Text2MaskRequest) -> Result<Text2MaskResponse> {
        if req.n == 0 {
            return Err(BackendError::InvalidRequest("n must be >= 1".into()));
        }
        if req.resolution == 0 || req.resolution > 4096 {
            return Err(BackendError::InvalidRequest(format!("resolution {} out of range", req.resolution)));
        }
        let color_maps = (0..req.n).map(|i| self.voronoi_map(req, i).to_png()).collect();
        Ok(Text2MaskResponse { color_maps })
    }

    fn mask2img(&self, req: &Mask2ImgRequest) -> Result<Mask2ImgResponse> {
        if req.n == 0 {
            return Err(BackendError::InvalidRequest("n must be >= 1".into()));
        }
        let cond = ColorMap::from_png(&req.color_map)
            .map_err(|e| BackendError::InvalidRequest(format!("color_map: {e}")))?;
        let images = (0..req.n).map(|i| self.render(req, &cond, i)).collect();
        Ok(Mask2ImgResponse { images })
    }
}
