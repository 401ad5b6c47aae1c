#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use segpipe_core::colorcodec::{build_palette, decode_semantic};
use segpipe_core::segdata::{decode_rgb_png, image_to_png};
use segpipe_core::{ColorMap, Palette};

static PALETTE: OnceLock<Palette> = OnceLock::new();

fuzz_target!(|data: &[u8]| {
    let _ = decode_rgb_png(data);
    let _ = image_to_png(data);
    if let Ok(map) = ColorMap::from_png(data) {
        let palette = PALETTE.get_or_init(|| build_palette(150, 32.0).unwrap());
        let labels = decode_semantic(&map, palette);
        assert_eq!((labels.height(), labels.width()), (map.height(), map.width()));
    }
});
