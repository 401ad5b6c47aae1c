use std::collections::BTreeMap;

use super::colormap::ColorMap;
use super::palette::{Palette, Rgb};
use super::{CodecError, Result};
use crate::segdata::{Label, PanopticMap, SegmentId, SemanticMap};

/// Edge band width used when none is given, sized for 768×768 maps.
pub const DEFAULT_EDGE_WIDTH: usize = 3;

fn out_of_range(value: u32, palette: &Palette) -> CodecError {
    CodecError::LabelOutOfRange { value, limit: palette.num_categories() as u32 }
}

/// Paints each pixel with its category color; IGNORE becomes the void color.
pub fn encode_semantic(map: &SemanticMap, palette: &Palette) -> Result<ColorMap> {
    let colors = palette.colors();
    let pixels = map
        .labels()
        .iter()
        .map(|l| match l.as_category() {
            None => Ok(palette.void_color()),
            Some(c) => colors.get(c as usize).copied().ok_or_else(|| out_of_range(c as u32, palette)),
        })
        .collect::<Result<Vec<_>>>()?;
    ColorMap::new(map.height(), map.width(), pixels)
}

/// Paints segments with their category colors, then overwrites every pixel
/// that has a different segment id (VOID included) within Chebyshev radius
/// `ceil(edge_width / 2)` with the edge color. Image borders are not outlined.
pub fn encode_panoptic(map: &PanopticMap, palette: &Palette, edge_width: usize) -> Result<ColorMap> {
    if edge_width == 0 {
        return Err(CodecError::InvalidArgument("edge_width must be >= 1".into()));
    }
    if let Some(s) = map.segments().iter().find(|s| s.category_id as usize >= palette.num_categories()) {
        return Err(out_of_range(s.category_id as u32, palette));
    }
    let lookup = map.category_lookup();
    let mut pixels: Vec<Rgb> = map
        .segment_ids()
        .iter()
        .map(|id| if id.is_void() { palette.void_color() } else { palette.colors()[lookup[id] as usize] })
        .collect();
    let radius = edge_width.div_ceil(2);
    let boundary = boundary_mask(map.segment_ids(), map.height(), map.width(), radius);
    for (px, on_edge) in pixels.iter_mut().zip(boundary) {
        if on_edge {
            *px = palette.edge_color();
        }
    }
    ColorMap::new(map.height(), map.width(), pixels)
}

/// A pixel is on a boundary iff the (clipped) square window around it holds
/// more than one id, i.e. the window minimum differs from the maximum. The
/// box min/max are computed separably: rows first, then columns.
fn boundary_mask(ids: &[SegmentId], height: usize, width: usize, radius: usize) -> Vec<bool> {
    let raw: Vec<u32> = ids.iter().map(|s| s.0).collect();
    let mut row_min = vec![0u32; raw.len()];
    let mut row_max = vec![0u32; raw.len()];
    for r in 0..height {
        let row = &raw[r * width..(r + 1) * width];
        for c in 0..width {
            let win = &row[c.saturating_sub(radius)..(c + radius + 1).min(width)];
            row_min[r * width + c] = *win.iter().min().expect("window is non-empty");
            row_max[r * width + c] = *win.iter().max().expect("window is non-empty");
        }
    }
    let mut out = vec![false; raw.len()];
    for c in 0..width {
        for r in 0..height {
            let lo = r.saturating_sub(radius);
            let hi = (r + radius + 1).min(height);
            let mn = (lo..hi).map(|rr| row_min[rr * width + c]).min().expect("window is non-empty");
            let mx = (lo..hi).map(|rr| row_max[rr * width + c]).max().expect("window is non-empty");
            out[r * width + c] = mn != mx;
        }
    }
    out
}

/// Nearest-color lookup over category colors plus void; the edge color is not
/// a candidate.
struct NearestColor<'a> {
    palette: &'a Palette,
    /// Direct-mapped memo; generated maps repeat colors heavily.
    memo: Vec<Option<(Rgb, Label)>>,
}

const MEMO_BITS: u32 = 12;

impl<'a> NearestColor<'a> {
    fn new(palette: &'a Palette) -> Self {
        NearestColor { palette, memo: vec![None; 1 << MEMO_BITS] }
    }

    fn slot(c: Rgb) -> usize {
        let key = (c.0[0] as u32) << 16 | (c.0[1] as u32) << 8 | c.0[2] as u32;
        (key.wrapping_mul(0x9E37_79B1) >> (32 - MEMO_BITS)) as usize
    }

    fn lookup(&mut self, c: Rgb) -> Label {
        let slot = Self::slot(c);
        if let Some((seen, label)) = self.memo[slot] {
            if seen == c {
                return label;
            }
        }
        let label = self.scan(c);
        self.memo[slot] = Some((c, label));
        label
    }

    fn scan(&self, c: Rgb) -> Label {
        // Strict `<` keeps the lowest index on ties; void is checked last, so
        // it loses every tie.
        let mut best = Label::IGNORE;
        let mut best_d2 = u32::MAX;
        for (i, &color) in self.palette.colors().iter().enumerate() {
            let d2 = c.dist2(color);
            if d2 < best_d2 {
                best_d2 = d2;
                best = Label::category(i as u16);
            }
        }
        if c.dist2(self.palette.void_color()) < best_d2 {
            best = Label::IGNORE;
        }
        best
    }
}

/// Projects a color map to labels by nearest palette color.
pub fn decode_semantic(colormap: &ColorMap, palette: &Palette) -> SemanticMap {
    let mut nearest = NearestColor::new(palette);
    let labels = colormap.pixels().iter().map(|&c| nearest.lookup(c)).collect();
    SemanticMap::new(colormap.height(), colormap.width(), labels).expect("color map dimensions are valid")
}

/// Per-pixel membership mask for one category.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Splits a semantic map into one binary mask per category present, in
/// ascending category order.
pub fn to_binary_masks(map: &SemanticMap) -> Vec<(u16, BinaryMask)> {
    let mut masks: BTreeMap<u16, BinaryMask> = BTreeMap::new();
    let n = map.labels().len();
    for (i, c) in map.labels().iter().enumerate() {
        if let Some(c) = c.as_category() {
            masks
                .entry(c)
                .or_insert_with(|| BinaryMask { height: map.height(), width: map.width(), bits: vec![false; n] })
                .bits[i] = true;
        }
    }
    masks.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorcodec::build_palette;
    use crate::segdata::SegmentInfo;

    fn palette() -> Palette {
        build_palette(150, 32.0).unwrap()
    }

    fn sem(h: usize, w: usize, labels: &[u16]) -> SemanticMap {
        SemanticMap::new(
            h,
            w,
            labels.iter().map(|&l| if l == u16::MAX { Label::IGNORE } else { Label::category(l) }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_map_encodes_uniformly() {
        let p = palette();
        let cm = encode_semantic(&SemanticMap::filled(4, 4, Label::category(7)).unwrap(), &p).unwrap();
        assert!(cm.pixels().iter().all(|&c| c == p.colors()[7]));
    }

    #[test]
    fn ignore_encodes_to_void() {
        let p = palette();
        let cm = encode_semantic(&sem(1, 2, &[3, u16::MAX]), &p).unwrap();
        assert_eq!(cm.pixels()[1], p.void_color());
        assert_eq!(decode_semantic(&cm, &p).labels()[1], Label::IGNORE);
    }

    #[test]
    fn encode_rejects_unknown_category() {
        let p = build_palette(4, 32.0).unwrap();
        assert!(matches!(
            encode_semantic(&sem(1, 1, &[4]), &p),
            Err(CodecError::LabelOutOfRange { value: 4, limit: 4 })
        ));
    }

    #[test]
    fn exact_color_decodes() {
        let p = palette();
        let cm = ColorMap::filled(1, 1, p.colors()[42]).unwrap();
        assert_eq!(decode_semantic(&cm, &p).labels()[0], Label::category(42));
    }

    #[test]
    fn edge_color_is_not_a_candidate() {
        let p = palette();
        let cm = ColorMap::filled(1, 1, p.edge_color()).unwrap();
        assert!(decode_semantic(&cm, &p).labels()[0].as_category().is_some());
    }

    #[test]
    fn single_segment_has_no_edges() {
        let p = palette();
        let m = PanopticMap::new(
            8,
            8,
            vec![SegmentId(1); 64],
            vec![SegmentInfo { id: SegmentId(1), category_id: 5, isthing: true }],
        )
        .unwrap();
        let cm = encode_panoptic(&m, &p, 1).unwrap();
        assert!(cm.pixels().iter().all(|&c| c == p.colors()[5]));
    }

    #[test]
    fn vertical_split_outlines_two_columns() {
        let p = palette();
        let ids = (0..64).map(|i| SegmentId(if i % 8 < 4 { 1 } else { 2 })).collect();
        let segs = vec![
            SegmentInfo { id: SegmentId(1), category_id: 0, isthing: true },
            SegmentInfo { id: SegmentId(2), category_id: 1, isthing: true },
        ];
        let cm = encode_panoptic(&PanopticMap::new(8, 8, ids, segs).unwrap(), &p, 1).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let want = match c {
                    3 | 4 => p.edge_color(),
                    0..=2 => p.colors()[0],
                    _ => p.colors()[1],
                };
                assert_eq!(cm.get(r, c), want, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn zero_edge_width_is_rejected() {
        let p = palette();
        let m = PanopticMap::new(1, 1, vec![SegmentId::VOID], vec![]).unwrap();
        assert!(matches!(encode_panoptic(&m, &p, 0), Err(CodecError::InvalidArgument(_))));
    }

    #[test]
    fn binary_masks() {
        let uniform = to_binary_masks(&SemanticMap::filled(2, 2, Label::category(0)).unwrap());
        assert_eq!(uniform.len(), 1);
        assert!(uniform[0].1.bits.iter().all(|&b| b));

        let masks = to_binary_masks(&sem(2, 2, &[2, 5, u16::MAX, 2]));
        assert_eq!(masks.len(), 2);
        assert_eq!(masks[0].0, 2);
        assert_eq!(masks[0].1.bits, [true, false, false, true]);
        assert_eq!(masks[1].0, 5);
        assert_eq!(masks[1].1.bits, [false, true, false, false]);

        assert!(to_binary_masks(&SemanticMap::filled(3, 3, Label::IGNORE).unwrap()).is_empty());
    }
}
