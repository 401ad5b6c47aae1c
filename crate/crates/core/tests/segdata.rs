mod common;

use std::fs::OpenOptions;
use std::io::Write;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segpipe_core::segdata::store::PayloadKind;
use segpipe_core::segdata::{
    encode_rgb_png, load_ade20k_annotation, load_coco_panoptic, load_semantic_png, save_coco_panoptic,
    save_semantic_png, DataError, GeneratorMeta, Manifest, ManifestFilter, ManifestHeader, ManifestWriter,
    PayloadStore, Provenance, SampleRecord,
};
use segpipe_core::{Label, SegmentId, SegmentInfo};

fn gray_png(w: usize, h: usize, px: &[u8]) -> Vec<u8> {
    // An 8-bit label map whose values are the raw pixel values.
    let labels = px.iter().map(|&v| if v == 0 { Label::IGNORE } else { Label::category(v as u16 - 1) }).collect();
    save_semantic_png(&segpipe_core::SemanticMap::new(h, w, labels).unwrap())
}

fn record(i: usize, provenance: Provenance) -> SampleRecord {
    let id = format!("r{i}");
    match provenance {
        Provenance::Real => SampleRecord::real(&id, format!("images/{id}.png"), format!("masks/{id}.png")),
        p => SampleRecord {
            sample_id: format!("r{}#x-{i}", i % 3),
            provenance: p,
            source_id: format!("r{}", i % 3),
            image_ref: format!("images/{i}.png"),
            mask_ref: "masks/m.png".into(),
            caption: format!("caption \"{i}\"\nwith newline"),
            segments_info: (i % 2 == 0).then(|| vec![SegmentInfo { id: SegmentId(i as u32 + 1), category_id: 3, isthing: true }]),
            generator_meta: Some(GeneratorMeta {
                backend: "mock".into(),
                version: "1".into(),
                seed: i as u64 * 7919,
                text2mask_steps: Some(200),
                mask2img_steps: 40,
                conditioning_ref: None,
                regenerated: i % 5 == 0,
                degenerate: false,
            }),
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coco_panoptic_roundtrip(seed in any::<u64>(), h in 1usize..24, w in 1usize..24, speckle in 0u32..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = common::random_panoptic(&mut rng, h, w, 8, 40, speckle);
        let (png, segments) = save_coco_panoptic(&map).unwrap();
        prop_assert_eq!(load_coco_panoptic(&png, &segments).unwrap(), map);
    }

    #[test]
    fn semantic_png_roundtrip(seed in any::<u64>(), h in 1usize..24, w in 1usize..24, n in prop::sample::select(vec![3u16, 150, 300, 512])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = common::random_semantic(&mut rng, h, w, n, 10);
        prop_assert_eq!(load_semantic_png(&save_semantic_png(&map), n as usize).unwrap(), map);
    }

    #[test]
    fn manifest_roundtrip(kinds in prop::collection::vec(0u8..3, 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let recs: Vec<SampleRecord> = kinds.iter().enumerate().map(|(i, k)| {
            record(i, [Provenance::Real, Provenance::MaskSyn, Provenance::ImgSyn][*k as usize])
        }).collect();
        {
            let mut w = ManifestWriter::create(&path, ManifestHeader::new("t", 150)).unwrap();
            for r in &recs {
                w.append(r.clone()).unwrap();
            }
        }
        let m = Manifest::open(&path).unwrap();
        prop_assert_eq!(m.indexed_len(), Some(recs.len() as u64));
        prop_assert_eq!(&m.records().unwrap(), &recs);
        let real: Vec<_> = m.scan(ManifestFilter::provenance(Provenance::Real)).unwrap().map(Result::unwrap).collect();
        prop_assert_eq!(real.len(), recs.iter().filter(|r| r.provenance == Provenance::Real).count());
    }
}

#[test]
fn ade20k_value_mapping() {
    let m = load_ade20k_annotation(&gray_png(3, 1, &[0, 1, 150])).unwrap();
    assert_eq!(m.labels(), &[Label::IGNORE, Label::category(0), Label::category(149)]);
    let err = load_ade20k_annotation(&gray_png(1, 1, &[151])).unwrap_err();
    assert!(matches!(err, DataError::LabelOutOfRange { value: 151, .. }), "{err:?}");
}

#[test]
fn ade20k_rejects_color_pngs() {
    let png = encode_rgb_png(1, 1, &[1, 2, 3]);
    assert!(matches!(load_ade20k_annotation(&png), Err(DataError::Format(_))));
    assert!(load_ade20k_annotation(b"not a png").is_err());
}

#[test]
fn coco_unknown_segment_and_void() {
    let png = encode_rgb_png(2, 1, &[0, 0, 0, 7, 1, 0]);
    let seg = SegmentInfo { id: SegmentId(7 + 256), category_id: 0, isthing: false };
    let m = load_coco_panoptic(&png, &[seg]).unwrap();
    assert_eq!(m.segment_ids(), &[SegmentId::VOID, SegmentId(263)]);
    assert!(matches!(load_coco_panoptic(&png, &[]), Err(DataError::UnknownSegment(263))));
}

#[test]
fn torn_tail_is_invisible_and_truncated_on_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    {
        let mut w = ManifestWriter::create(&path, ManifestHeader::new("t", 150)).unwrap();
        for i in 0..3 {
            w.append(record(i, Provenance::Real)).unwrap();
        }
        w.commit().unwrap();
    }
    // A crash mid-append leaves a partial line past the committed prefix.
    OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"sample_id\":\"r9\",\"prov").unwrap();
    assert_eq!(Manifest::open(&path).unwrap().records().unwrap().len(), 3);

    let mut w = ManifestWriter::open(&path).unwrap();
    assert_eq!(w.len(), 3);
    w.append(record(3, Provenance::Real)).unwrap();
    w.commit().unwrap();
    drop(w);
    let ids: Vec<_> = Manifest::open(&path).unwrap().records().unwrap().into_iter().map(|r| r.sample_id).collect();
    assert_eq!(ids, ["r0", "r1", "r2", "r3"]);
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = ManifestWriter::create(dir.path().join("m.jsonl"), ManifestHeader::new("t", 1)).unwrap();
    w.append(record(0, Provenance::Real)).unwrap();
    assert!(matches!(w.append(record(0, Provenance::Real)), Err(DataError::DuplicateId(_))));
}

#[test]
fn invalid_records_are_rejected() {
    let mut r = record(1, Provenance::MaskSyn);
    r.generator_meta = None;
    assert!(r.validate().is_err());
    let line = serde_json::to_string(&record(0, Provenance::Real)).unwrap().replace("REAL", "SYNTH");
    assert!(SampleRecord::from_json_line(&line).is_err());
}

#[test]
fn payload_store_dedups_and_confines_paths() {
    let dir = tempfile::tempdir().unwrap();
    let store = PayloadStore::new(dir.path());
    let a = store.put(PayloadKind::Image, b"abc").unwrap();
    let b = store.put(PayloadKind::Image, b"abc").unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with("images/") && a.ends_with(".png"));
    assert_eq!(store.get(&a).unwrap(), b"abc");
    let m = store.put(PayloadKind::Mask, b"abc").unwrap();
    assert!(m.starts_with("masks/"));
    assert!(store.get("../etc/passwd").is_err());
    assert!(store.get("/etc/passwd").is_err());
}
