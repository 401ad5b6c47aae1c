#![no_main]

use libfuzzer_sys::fuzz_target;
use segpipe_core::Palette;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = Palette::from_json(data) {
        let again = Palette::from_json(p.to_json().as_bytes()).unwrap();
        assert_eq!(again, p);
    }
});
