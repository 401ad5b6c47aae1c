#![no_main]

use libfuzzer_sys::fuzz_target;
use segpipe_core::segdata::{load_coco_panoptic, save_coco_panoptic};
use segpipe_core::SegmentInfo;

// Input layout: segments_info JSON, a newline, then the PNG bytes.
fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == b'\n') else { return };
    let Ok(segments) = serde_json::from_slice::<Vec<SegmentInfo>>(&data[..split]) else { return };
    if let Ok(map) = load_coco_panoptic(&data[split + 1..], &segments) {
        let (png, info) = save_coco_panoptic(&map).unwrap();
        assert_eq!(load_coco_panoptic(&png, &info).unwrap(), map);
    }
});
