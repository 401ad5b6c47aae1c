#![no_main]

use libfuzzer_sys::fuzz_target;
use segpipe_core::segdata::{load_ade20k_annotation, load_semantic_png, save_semantic_png};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = load_ade20k_annotation(data) {
        // shifted storage must read back to the same labels
        let again = load_semantic_png(&save_semantic_png(&map), 150).unwrap();
        assert_eq!(again, map);
    }
    let _ = load_semantic_png(data, 20);
});
