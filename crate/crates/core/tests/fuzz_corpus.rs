//! Replays the checked-in fuzz seeds through the same entry points the fuzz
//! targets drive, so the seeds stay meaningful on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use segpipe_core::colorcodec::{build_palette, decode_semantic};
use segpipe_core::genbackend::{
    CaptionRequest, CaptionResponse, ErrorEnvelope, Mask2ImgRequest, Mask2ImgResponse, Text2MaskRequest,
    Text2MaskResponse,
};
use segpipe_core::segdata::{
    decode_rgb_png, image_to_png, load_ade20k_annotation, load_coco_panoptic, load_semantic_png, save_coco_panoptic,
    save_semantic_png, ManifestHeader, SampleRecord,
};
use segpipe_core::{ColorMap, Palette, SegmentInfo};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn accepted(target: &str, run: impl Fn(&[u8]) -> bool) -> Vec<String> {
    seeds(target).into_iter().filter(|(_, data)| run(data)).map(|(name, _)| name).collect()
}

#[test]
fn ade20k_seeds() {
    let ok = accepted("ade20k_annotation", |data| {
        let _ = load_semantic_png(data, 20);
        match load_ade20k_annotation(data) {
            Ok(map) => {
                assert_eq!(load_semantic_png(&save_semantic_png(&map), 150).unwrap(), map);
                true
            }
            Err(_) => false,
        }
    });
    assert_eq!(ok, ["small.png"]);
}

#[test]
fn coco_seeds() {
    let ok = accepted("coco_panoptic", |data| {
        let split = data.iter().position(|&b| b == b'\n').unwrap();
        let segments: Vec<SegmentInfo> = serde_json::from_slice(&data[..split]).unwrap();
        match load_coco_panoptic(&data[split + 1..], &segments) {
            Ok(map) => {
                let (png, info) = save_coco_panoptic(&map).unwrap();
                assert_eq!(load_coco_panoptic(&png, &info).unwrap(), map);
                true
            }
            Err(_) => false,
        }
    });
    assert_eq!(ok, ["empty_table", "three_segments"]);
}

#[test]
fn color_map_seeds() {
    let palette = build_palette(150, 32.0).unwrap();
    let ok = accepted("color_map_png", |data| {
        let _ = decode_rgb_png(data);
        let _ = image_to_png(data);
        match ColorMap::from_png(data) {
            Ok(map) => {
                let labels = decode_semantic(&map, &palette);
                assert_eq!((labels.height(), labels.width()), (map.height(), map.width()));
                true
            }
            Err(_) => false,
        }
    });
    assert!(ok.contains(&"mixed.png".to_string()), "{ok:?}");
    assert!(!ok.contains(&"not_png".to_string()));
    let photo = seeds("color_map_png").into_iter().find(|(n, _)| n == "photo.jpg").unwrap().1;
    assert_eq!(decode_rgb_png(&image_to_png(&photo).unwrap()).unwrap().0, 8);
}

#[test]
fn palette_seeds() {
    let ok = accepted("palette_json", |data| match Palette::from_json(data) {
        Ok(p) => {
            assert_eq!(Palette::from_json(p.to_json().as_bytes()).unwrap(), p);
            true
        }
        Err(_) => false,
    });
    assert_eq!(ok, ["p150.json", "p3.json"]);
}

#[test]
fn manifest_line_seeds() {
    let records = accepted("manifest_line", |data| {
        let line = std::str::from_utf8(data).unwrap();
        match SampleRecord::from_json_line(line) {
            Ok(rec) => {
                assert_eq!(SampleRecord::from_json_line(&serde_json::to_string(&rec).unwrap()).unwrap(), rec);
                true
            }
            Err(_) => false,
        }
    });
    assert_eq!(records, ["real.json", "synthetic.json"]);
    let headers = accepted("manifest_line", |data| ManifestHeader::from_json_line(std::str::from_utf8(data).unwrap()).is_ok());
    assert_eq!(headers, ["header.json"]);
}

#[test]
fn protocol_seeds() {
    let ok = accepted("protocol_body", |data| {
        [
            serde_json::from_slice::<CaptionRequest>(data).is_ok(),
            serde_json::from_slice::<CaptionResponse>(data).is_ok(),
            serde_json::from_slice::<Text2MaskRequest>(data).is_ok(),
            serde_json::from_slice::<Text2MaskResponse>(data).is_ok(),
            serde_json::from_slice::<Mask2ImgRequest>(data).is_ok(),
            serde_json::from_slice::<Mask2ImgResponse>(data).is_ok(),
            serde_json::from_slice::<ErrorEnvelope>(data).is_ok(),
        ]
        .contains(&true)
    });
    assert_eq!(ok, ["caption_req.json", "error.json", "mask2img_resp.json", "text2mask_req.json"]);
}
