//! Random map generators and brute-force oracles shared by the integration
//! and acceptance tests. The oracles deliberately avoid the library's own
//! algorithms: they work pixel by pixel with plain loops.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use segpipe_core::{Label, PanopticMap, SegmentId, SegmentInfo, SemanticMap};

pub fn random_semantic(rng: &mut impl Rng, h: usize, w: usize, num_categories: u16, ignore_pct: u32) -> SemanticMap {
    let labels = (0..h * w)
        .map(|_| {
            if rng.random_range(0..100) < ignore_pct {
                Label::IGNORE
            } else {
                Label::category(rng.random_range(0..num_categories))
            }
        })
        .collect();
    SemanticMap::new(h, w, labels).unwrap()
}

/// Blobby semantic map: nearest of a few random sites, so regions are
/// contiguous like real annotations.
pub fn blob_semantic(rng: &mut impl Rng, h: usize, w: usize, num_categories: u16, sites: usize) -> SemanticMap {
    let sites: Vec<(usize, usize, Label)> = (0..sites)
        .map(|_| {
            let l = if rng.random_range(0..8) == 0 { Label::IGNORE } else { Label::category(rng.random_range(0..num_categories)) };
            (rng.random_range(0..h), rng.random_range(0..w), l)
        })
        .collect();
    let labels = (0..h * w)
        .map(|p| {
            let (r, c) = (p / w, p % w);
            sites.iter().min_by_key(|s| (s.0.abs_diff(r)).pow(2) + (s.1.abs_diff(c)).pow(2)).unwrap().2
        })
        .collect();
    SemanticMap::new(h, w, labels).unwrap()
}

/// Panoptic map with at most `max_segments` non-void segments (Voronoi
/// blobs, optionally with per-pixel speckle) and random categories.
pub fn random_panoptic(
    rng: &mut impl Rng,
    h: usize,
    w: usize,
    max_segments: usize,
    num_categories: u16,
    speckle_pct: u32,
) -> PanopticMap {
    let n_segments = rng.random_range(1..=max_segments);
    let mut ids: Vec<u32> = if rng.random_bool(0.5) { vec![0] } else { Vec::new() };
    while ids.iter().filter(|&&i| i != 0).count() < n_segments {
        let id = rng.random_range(1..1u32 << 24);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let sites: Vec<(usize, usize)> = ids.iter().map(|_| (rng.random_range(0..h), rng.random_range(0..w))).collect();
    let pixels: Vec<SegmentId> = (0..h * w)
        .map(|p| {
            if rng.random_range(0..100) < speckle_pct {
                return SegmentId(ids[rng.random_range(0..ids.len())]);
            }
            let (r, c) = (p / w, p % w);
            let i = (0..sites.len())
                .min_by_key(|&i| (sites[i].0.abs_diff(r)).pow(2) + (sites[i].1.abs_diff(c)).pow(2))
                .unwrap();
            SegmentId(ids[i])
        })
        .collect();
    let present: BTreeSet<u32> = pixels.iter().map(|s| s.0).filter(|&i| i != 0).collect();
    let segments = present
        .into_iter()
        .map(|id| SegmentInfo {
            id: SegmentId(id),
            category_id: rng.random_range(0..num_categories),
            isthing: rng.random_bool(0.5),
        })
        .collect();
    PanopticMap::new(h, w, pixels, segments).unwrap()
}

/// Pixels whose clipped Chebyshev neighborhood of radius ceil(width / 2)
/// holds more than one segment id.
pub fn brute_edges(map: &PanopticMap, edge_width: usize) -> Vec<bool> {
    let (h, w) = (map.height() as isize, map.width() as isize);
    let r = edge_width.div_ceil(2) as isize;
    let ids = map.segment_ids();
    let mut out = vec![false; ids.len()];
    for y in 0..h {
        for x in 0..w {
            let me = ids[(y * w + x) as usize];
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h || nx >= w {
                        continue;
                    }
                    if ids[(ny * w + nx) as usize] != me {
                        out[(y * w + x) as usize] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

/// Mean IoU by direct per-category pixel counting.
pub fn brute_miou(pred: &SemanticMap, gt: &SemanticMap, num_categories: u16) -> Option<f64> {
    let mut ious = Vec::new();
    for c in 0..num_categories {
        let (mut inter, mut union) = (0u64, 0u64);
        for (p, g) in pred.labels().iter().zip(gt.labels()) {
            if g.is_ignore() {
                continue;
            }
            let (in_p, in_g) = (p.as_category() == Some(c), g.as_category() == Some(c));
            inter += u64::from(in_p && in_g);
            union += u64::from(in_p || in_g);
        }
        if union > 0 {
            ious.push(inter as f64 / union as f64);
        }
    }
    if gt.labels().iter().all(|l| l.is_ignore()) {
        return None;
    }
    Some(ious.iter().sum::<f64>() / ious.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePq {
    pub pq: f64,
    /// Matched (pred, gt) id pairs, sorted.
    pub matches: Vec<(u32, u32)>,
    /// Per category: (tp, fp, fn).
    pub tallies: BTreeMap<u16, (u64, u64, u64)>,
}

fn iou_brute(pred: &PanopticMap, gt: &PanopticMap, p: SegmentId, g: SegmentId) -> (u64, u64) {
    let (mut inter, mut union) = (0u64, 0u64);
    for (&a, &b) in pred.segment_ids().iter().zip(gt.segment_ids()) {
        if b.0 == 0 {
            continue;
        }
        inter += u64::from(a == p && b == g);
        union += u64::from(a == p || b == g);
    }
    (inter, union)
}

/// PQ with the matching found by exhaustive search over every partial
/// injective assignment of gt segments to same-category pred segments with
/// IoU > 0.5, keeping the assignment with the most matches.
pub fn exhaustive_pq(pred: &PanopticMap, gt: &PanopticMap) -> Option<OraclePq> {
    let gts: Vec<&SegmentInfo> = gt.segments().iter().collect();
    let preds: Vec<&SegmentInfo> = pred.segments().iter().collect();
    let mut allowed = vec![vec![None; preds.len()]; gts.len()];
    for (i, g) in gts.iter().enumerate() {
        for (j, p) in preds.iter().enumerate() {
            if g.category_id != p.category_id {
                continue;
            }
            let (inter, union) = iou_brute(pred, gt, p.id, g.id);
            if union > 0 && inter as f64 / union as f64 > 0.5 {
                allowed[i][j] = Some(inter as f64 / union as f64);
            }
        }
    }
    fn search(i: usize, allowed: &[Vec<Option<f64>>], used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, best: &mut Vec<(usize, usize)>) {
        if i == allowed.len() {
            if cur.len() > best.len() {
                *best = cur.clone();
            }
            return;
        }
        search(i + 1, allowed, used, cur, best);
        for j in 0..used.len() {
            if !used[j] && allowed[i][j].is_some() {
                used[j] = true;
                cur.push((i, j));
                search(i + 1, allowed, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = Vec::new();
    search(0, &allowed, &mut vec![false; preds.len()], &mut Vec::new(), &mut best);

    let mut tallies: BTreeMap<u16, (u64, u64, u64)> = BTreeMap::new();
    let mut iou_sums: BTreeMap<u16, f64> = BTreeMap::new();
    for &(i, j) in &best {
        tallies.entry(gts[i].category_id).or_default().0 += 1;
        *iou_sums.entry(gts[i].category_id).or_default() += allowed[i][j].unwrap();
    }
    for (i, g) in gts.iter().enumerate() {
        if !best.iter().any(|&(bi, _)| bi == i) {
            tallies.entry(g.category_id).or_default().2 += 1;
        }
    }
    for (j, p) in preds.iter().enumerate() {
        if best.iter().any(|&(_, bj)| bj == j) {
            continue;
        }
        let (mut area, mut on_void) = (0u64, 0u64);
        for (&a, &b) in pred.segment_ids().iter().zip(gt.segment_ids()) {
            if a == p.id {
                area += 1;
                on_void += u64::from(b.0 == 0);
            }
        }
        if on_void * 2 <= area {
            tallies.entry(p.category_id).or_default().1 += 1;
        }
    }
    if tallies.is_empty() {
        return None;
    }
    let per_cat: Vec<f64> = tallies
        .iter()
        .map(|(c, &(tp, fp, fn_))| iou_sums.get(c).copied().unwrap_or(0.0) / (tp as f64 + 0.5 * fp as f64 + 0.5 * fn_ as f64))
        .collect();
    let mut matches: Vec<(u32, u32)> = best.iter().map(|&(i, j)| (preds[j].id.0, gts[i].id.0)).collect();
    matches.sort_unstable();
    Some(OraclePq { pq: per_cat.iter().sum::<f64>() / per_cat.len() as f64, matches, tallies })
}

/// Adds a random offset of Euclidean norm < `bound` to each pixel, clamped
/// to the RGB cube (clamping only shortens the offset).
pub fn add_noise(rng: &mut impl Rng, pixels: &mut [segpipe_core::Rgb], bound: i32) {
    for px in pixels {
        let d = loop {
            let d = [
                rng.random_range(-bound + 1..bound),
                rng.random_range(-bound + 1..bound),
                rng.random_range(-bound + 1..bound),
            ];
            if d.iter().map(|v| v * v).sum::<i32>() < bound * bound {
                break d;
            }
        };
        for (ch, dv) in px.0.iter_mut().zip(d) {
            *ch = (*ch as i32 + dv).clamp(0, 255) as u8;
        }
    }
}

/// Writes `n` REAL samples (RGB image + shifted-by-one label PNG) under
/// `root` and returns the manifest path `root/real.jsonl`.
pub fn semantic_dataset(root: &std::path::Path, n: usize, h: usize, w: usize, num_categories: u16) -> std::path::PathBuf {
    use rand::SeedableRng;
    use segpipe_core::segdata::{encode_rgb_png, save_semantic_png, ManifestHeader, ManifestWriter, SampleRecord};

    std::fs::create_dir_all(root.join("images")).unwrap();
    std::fs::create_dir_all(root.join("annotations")).unwrap();
    let path = root.join("real.jsonl");
    let mut w_ = ManifestWriter::create(&path, ManifestHeader::new("fixture", num_categories as u32)).unwrap();
    for i in 0..n {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(i as u64);
        let mask = blob_semantic(&mut rng, h, w, num_categories, 4);
        let image: Vec<u8> = (0..h * w * 3).map(|_| rng.random()).collect();
        let (img_ref, mask_ref) = (format!("images/s{i}.png"), format!("annotations/s{i}.png"));
        std::fs::write(root.join(&img_ref), encode_rgb_png(w, h, &image)).unwrap();
        std::fs::write(root.join(&mask_ref), save_semantic_png(&mask)).unwrap();
        w_.append(SampleRecord::real(format!("s{i}"), img_ref, mask_ref)).unwrap();
    }
    w_.commit().unwrap();
    path
}

/// Relative path -> bytes for every file under `dir`.
pub fn tree(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &std::path::Path, dir: &std::path::Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if dir.exists() {
        walk(dir, dir, &mut out);
    }
    out
}
