//! COCO panoptic PNGs: segment id = R + 256·G + 256²·B, with 0 meaning VOID.

use super::maps::{PanopticMap, SegmentId, SegmentInfo};
use super::png::{decode_rgb8_exact, encode_rgb_png};
use super::{DataError, Result};

/// Exclusive upper bound of encodable segment ids.
pub const MAX_SEGMENT_ID: u32 = 1 << 24;

pub fn load_coco_panoptic(png_bytes: &[u8], segments_info: &[SegmentInfo]) -> Result<PanopticMap> {
    let (w, h, rgb) = decode_rgb8_exact(png_bytes)?;
    let ids = rgb
        .chunks_exact(3)
        .map(|p| SegmentId(p[0] as u32 + 256 * p[1] as u32 + 65_536 * p[2] as u32))
        .collect();
    PanopticMap::new(h, w, ids, segments_info.to_vec())
}

/// Returns the PNG bytes and the segment table in map order.
pub fn save_coco_panoptic(map: &PanopticMap) -> Result<(Vec<u8>, Vec<SegmentInfo>)> {
    if let Some(s) = map.segments().iter().find(|s| s.id.0 >= MAX_SEGMENT_ID) {
        return Err(DataError::IdOverflow(s.id.0));
    }
    let mut rgb = Vec::with_capacity(map.segment_ids().len() * 3);
    for id in map.segment_ids() {
        let v = id.0;
        rgb.extend_from_slice(&[(v & 0xff) as u8, ((v >> 8) & 0xff) as u8, (v >> 16) as u8]);
    }
    Ok((encode_rgb_png(map.width(), map.height(), &rgb), map.segments().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(id: u32, cat: u16) -> SegmentInfo {
        SegmentInfo { id: SegmentId(id), category_id: cat, isthing: false }
    }

    #[test]
    fn black_is_void() {
        let png = encode_rgb_png(3, 2, &[0; 18]);
        let m = load_coco_panoptic(&png, &[]).unwrap();
        assert!(m.segment_ids().iter().all(|s| s.is_void()));
    }

    #[test]
    fn id_arithmetic() {
        let png = encode_rgb_png(1, 1, &[1, 1, 0]);
        let m = load_coco_panoptic(&png, &[info(257, 3)]).unwrap();
        assert_eq!(m.get(0, 0), SegmentId(257));
    }

    #[test]
    fn missing_segment_is_reported() {
        let png = encode_rgb_png(1, 1, &[5, 0, 0]);
        assert!(matches!(load_coco_panoptic(&png, &[]), Err(DataError::UnknownSegment(5))));
    }

    #[test]
    fn single_segment_saves_one_record() {
        let m = PanopticMap::new(2, 2, vec![SegmentId(9); 4], vec![info(9, 1)]).unwrap();
        let (_, segs) = save_coco_panoptic(&m).unwrap();
        assert_eq!(segs, vec![info(9, 1)]);
    }

    #[test]
    fn overflow_is_rejected() {
        let m = PanopticMap::new(1, 1, vec![SegmentId(MAX_SEGMENT_ID)], vec![info(MAX_SEGMENT_ID, 0)])
            .unwrap();
        assert!(matches!(save_coco_panoptic(&m), Err(DataError::IdOverflow(id)) if id == MAX_SEGMENT_ID));
    }

    #[test]
    fn gray_png_is_a_format_error() {
        let png = super::super::png::encode_gray8_png(1, 1, &[3]);
        assert!(matches!(load_coco_panoptic(&png, &[]), Err(DataError::Format(_))));
    }
}
