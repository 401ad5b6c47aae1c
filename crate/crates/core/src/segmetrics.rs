//! Segmentation metrics: mean IoU over a confusion matrix and panoptic
//! quality with IoU > 0.5 segment matching.
//!
//! Counts are exact integers; the mIoU mean is taken over exact rationals
//! with one final conversion to `f64`.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::segdata::{PanopticMap, SegmentId, SemanticMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("prediction is {pred:?}, ground truth is {gt:?}")]
    ShapeMismatch { pred: (usize, usize), gt: (usize, usize) },
    #[error("no valid pixels to evaluate")]
    EmptyEvaluation,
    #[error("label {value} out of range (limit {limit})")]
    LabelOutOfRange { value: u32, limit: u32 },
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Pixel counts: entry `(i, j)` is the number of pixels with ground truth `i`
/// predicted as `j`. Ground-truth IGNORE pixels are not counted; valid pixels
/// predicted as IGNORE are tallied separately as misses of their gt class.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConfusionMatrix {
    num_categories: usize,
    counts: Vec<u64>,
    unpredicted: Vec<u64>,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CategoryIou {
    pub category: u16,
    pub iou: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct MiouReport {
    pub miou: f64,
    pub per_category: Vec<CategoryIou>,
}

impl ConfusionMatrix {
    pub fn new(num_categories: usize) -> Self {
        ConfusionMatrix {
            num_categories,
            counts: vec![0; num_categories * num_categories],
            unpredicted: vec![0; num_categories],
        }
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_categories + pred]
    }

    /// Valid pixels of `gt` class predicted as IGNORE.
    pub fn unpredicted(&self, gt: usize) -> u64 {
        self.unpredicted[gt]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.unpredicted.iter().sum::<u64>()
    }

    pub fn add(&mut self, pred: &SemanticMap, gt: &SemanticMap) -> Result<()> {
        check_dims((pred.height(), pred.width()), (gt.height(), gt.width()))?;
        let n = self.num_categories;
        let limit = |v: u16| MetricError::LabelOutOfRange { value: v as u32, limit: n as u32 };
        for (p, g) in pred.labels().iter().zip(gt.labels()) {
            let Some(g) = g.as_category() else { continue };
            if g as usize >= n {
                return Err(limit(g));
            }
            match p.as_category() {
                Some(p) if p as usize >= n => return Err(limit(p)),
                Some(p) => self.counts[g as usize * n + p as usize] += 1,
                None => self.unpredicted[g as usize] += 1,
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_categories, other.num_categories, "merging matrices of different sizes");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.unpredicted.iter_mut().zip(&other.unpredicted) {
            *a += b;
        }
    }

    /// `(tp, fp, fn)` for one category.
    pub fn tallies(&self, c: usize) -> (u64, u64, u64) {
        let n = self.num_categories;
        let tp = self.get(c, c);
        let col: u64 = (0..n).map(|g| self.get(g, c)).sum();
        let row: u64 = (0..n).map(|p| self.get(c, p)).sum::<u64>() + self.unpredicted[c];
        (tp, col - tp, row - tp)
    }

    /// Mean IoU over categories present in ground truth or prediction.
    pub fn report(&self) -> Result<MiouReport> {
        if self.total() == 0 {
            return Err(MetricError::EmptyEvaluation);
        }
        let mut sum = BigRational::zero();
        let mut per_category = Vec::new();
        for c in 0..self.num_categories {
            let (tp, fp, fn_) = self.tallies(c);
            let denom = tp + fp + fn_;
            if denom == 0 {
                continue;
            }
            let iou = BigRational::new(BigInt::from(tp), BigInt::from(denom));
            per_category.push(CategoryIou { category: c as u16, iou: iou.to_f64().unwrap_or(0.0), tp, fp, fn_ });
            sum += iou;
        }
        let mean = sum / BigRational::from_integer(BigInt::from(per_category.len()));
        Ok(MiouReport { miou: mean.to_f64().unwrap_or(0.0), per_category })
    }
}

fn check_dims(pred: (usize, usize), gt: (usize, usize)) -> Result<()> {
    if pred != gt {
        return Err(MetricError::ShapeMismatch { pred, gt });
    }
    Ok(())
}

pub fn confusion_matrix(pred: &SemanticMap, gt: &SemanticMap, num_categories: usize) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(num_categories);
    m.add(pred, gt)?;
    Ok(m)
}

pub fn miou(pred: &SemanticMap, gt: &SemanticMap, num_categories: usize) -> Result<f64> {
    Ok(confusion_matrix(pred, gt, num_categories)?.report()?.miou)
}

/// Per-category panoptic tallies; sums across images.
#[derive(Clone, Copy, PartialEq, Debug, Default, Serialize, Deserialize)]
pub struct PqTally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub iou_sum: f64,
}

impl PqTally {
    fn denominator(&self) -> f64 {
        self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64
    }

    pub fn pq(&self) -> f64 {
        self.iou_sum / self.denominator()
    }

    pub fn sq(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.iou_sum / self.tp as f64
        }
    }

    pub fn rq(&self) -> f64 {
        self.tp as f64 / self.denominator()
    }

    fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub pred: SegmentId,
    pub gt: SegmentId,
    pub category: u16,
    pub iou: f64,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CategoryPq {
    pub category: u16,
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    #[serde(flatten)]
    pub tally: PqTally,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct PqReport {
    /// Mean over categories with at least one TP, FP or FN.
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub per_category: Vec<CategoryPq>,
    /// Matched pairs of the evaluated image (empty for accumulated reports).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matches: Vec<SegmentMatch>,
}

/// Accumulates panoptic tallies over images.
#[derive(Clone, Debug, Default)]
pub struct PqAccumulator {
    tallies: BTreeMap<u16, PqTally>,
}

impl PqAccumulator {
    /// Adds one image pair and returns its matches.
    pub fn add(&mut self, pred: &PanopticMap, gt: &PanopticMap) -> Result<Vec<SegmentMatch>> {
        check_dims((pred.height(), pred.width()), (gt.height(), gt.width()))?;
        let mut pred_area: HashMap<SegmentId, u64> = HashMap::new();
        let mut gt_area: HashMap<SegmentId, u64> = HashMap::new();
        let mut overlap: HashMap<(SegmentId, SegmentId), u64> = HashMap::new();
        for (&p, &g) in pred.segment_ids().iter().zip(gt.segment_ids()) {
            *pred_area.entry(p).or_default() += 1;
            *gt_area.entry(g).or_default() += 1;
            *overlap.entry((p, g)).or_default() += 1;
        }
        let void_overlap = |p: SegmentId| overlap.get(&(p, SegmentId::VOID)).copied().unwrap_or(0);

        let pred_cat: HashMap<SegmentId, u16> = pred.segments().iter().map(|s| (s.id, s.category_id)).collect();
        let gt_cat: HashMap<SegmentId, u16> = gt.segments().iter().map(|s| (s.id, s.category_id)).collect();

        // Same-category pairs with IoU > 0.5. Two segments of one map are
        // disjoint, so each segment has at most one such partner.
        let mut matches = Vec::new();
        let mut pairs: Vec<(&(SegmentId, SegmentId), &u64)> = overlap.iter().collect();
        pairs.sort_unstable_by_key(|(k, _)| **k);
        for (&(p, g), &inter) in pairs {
            if p.is_void() || g.is_void() || pred_cat[&p] != gt_cat[&g] {
                continue;
            }
            let union = pred_area[&p] + gt_area[&g] - inter - void_overlap(p);
            if 2 * inter > union {
                matches.push(SegmentMatch { pred: p, gt: g, category: gt_cat[&g], iou: inter as f64 / union as f64 });
            }
        }

        for m in &matches {
            let t = self.tallies.entry(m.category).or_default();
            t.tp += 1;
            t.iou_sum += m.iou;
        }
        for s in gt.segments() {
            if !matches.iter().any(|m| m.gt == s.id) {
                self.tallies.entry(s.category_id).or_default().fn_ += 1;
            }
        }
        for s in pred.segments() {
            if matches.iter().any(|m| m.pred == s.id) {
                continue;
            }
            // Predictions mostly on unannotated pixels are not penalized.
            if 2 * void_overlap(s.id) > pred_area[&s.id] {
                continue;
            }
            self.tallies.entry(s.category_id).or_default().fp += 1;
        }
        Ok(matches)
    }

    pub fn report(&self) -> Result<PqReport> {
        let per_category: Vec<CategoryPq> = self
            .tallies
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(&category, t)| CategoryPq { category, pq: t.pq(), sq: t.sq(), rq: t.rq(), tally: *t })
            .collect();
        if per_category.is_empty() {
            return Err(MetricError::EmptyEvaluation);
        }
        let n = per_category.len() as f64;
        let mean = |f: fn(&CategoryPq) -> f64| per_category.iter().map(f).sum::<f64>() / n;
        Ok(PqReport { pq: mean(|c| c.pq), sq: mean(|c| c.sq), rq: mean(|c| c.rq), per_category, matches: Vec::new() })
    }
}

/// Panoptic quality of a single image pair.
pub fn pq(pred: &PanopticMap, gt: &PanopticMap) -> Result<PqReport> {
    let mut acc = PqAccumulator::default();
    let matches = acc.add(pred, gt)?;
    let mut report = acc.report()?;
    report.matches = matches;
    Ok(report)
}
