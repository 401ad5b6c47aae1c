#![no_main]

use libfuzzer_sys::fuzz_target;
use segpipe_core::segdata::{ManifestHeader, SampleRecord};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    let _ = ManifestHeader::from_json_line(line);
    if let Ok(rec) = SampleRecord::from_json_line(line) {
        let again = SampleRecord::from_json_line(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(again, rec);
    }
});
