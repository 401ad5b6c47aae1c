use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Per-pixel label of a [`SemanticMap`]: a category index or [`Label::IGNORE`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct Label(u16);

impl Label {
    pub const IGNORE: Label = Label(u16::MAX);
    /// Largest representable category index.
    pub const MAX_CATEGORY: u16 = u16::MAX - 1;

    /// Panics if `category` collides with the IGNORE sentinel.
    pub fn category(category: u16) -> Label {
        assert!(category <= Self::MAX_CATEGORY, "category {category} is reserved");
        Label(category)
    }

    pub fn is_ignore(self) -> bool {
        self == Self::IGNORE
    }

    pub fn as_category(self) -> Option<u16> {
        (!self.is_ignore()).then_some(self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_category() {
            Some(c) => write!(f, "{c}"),
            None => f.write_str("IGNORE"),
        }
    }
}

/// Per-pixel segment identifier of a [`PanopticMap`]; [`SegmentId::VOID`] marks
/// unannotated pixels.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

impl SegmentId {
    pub const VOID: SegmentId = SegmentId(0);

    pub fn is_void(self) -> bool {
        self == Self::VOID
    }
}

/// Dense semantic segmentation: one label per pixel, row-major.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SemanticMap {
    height: usize,
    width: usize,
    labels: Vec<Label>,
}

impl SemanticMap {
    pub fn new(height: usize, width: usize, labels: Vec<Label>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DataError::InvalidMap(format!("empty dimensions {height}x{width}")));
        }
        if labels.len() != height * width {
            return Err(DataError::InvalidMap(format!(
                "{} labels for a {height}x{width} map",
                labels.len()
            )));
        }
        Ok(SemanticMap { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: Label) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: Label) {
        self.labels[row * self.width + col] = label;
    }

    /// Checks that every non-IGNORE label is below `num_categories`.
    pub fn validate(&self, num_categories: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .filter_map(|l| l.as_category())
            .find(|&c| c as usize >= num_categories)
        {
            Some(c) => Err(DataError::LabelOutOfRange { value: c as u32, limit: num_categories as u32 }),
            None => Ok(()),
        }
    }

    /// Pixel count per category present (IGNORE excluded), keyed by category.
    pub fn category_histogram(&self) -> BTreeMap<u16, u64> {
        let mut hist = BTreeMap::new();
        for c in self.labels.iter().filter_map(|l| l.as_category()) {
            *hist.entry(c).or_insert(0) += 1;
        }
        hist
    }
}

/// One entry of a panoptic map's segment table.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: SegmentId,
    pub category_id: u16,
    #[serde(default)]
    pub isthing: bool,
}

/// Dense panoptic segmentation: per-pixel segment ids plus a segment table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PanopticMap {
    height: usize,
    width: usize,
    segment_ids: Vec<SegmentId>,
    segments: Vec<SegmentInfo>,
}

impl PanopticMap {
    /// Validates that every non-VOID pixel id is listed exactly once and every
    /// listed segment covers at least one pixel.
    pub fn new(
        height: usize,
        width: usize,
        segment_ids: Vec<SegmentId>,
        segments: Vec<SegmentInfo>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(DataError::InvalidMap(format!("empty dimensions {height}x{width}")));
        }
        if segment_ids.len() != height * width {
            return Err(DataError::InvalidMap(format!(
                "{} segment ids for a {height}x{width} map",
                segment_ids.len()
            )));
        }
        let mut area: HashMap<SegmentId, u64> = HashMap::with_capacity(segments.len());
        for s in &segments {
            if s.id.is_void() {
                return Err(DataError::InvalidMap("segment table lists the VOID id".into()));
            }
            if area.insert(s.id, 0).is_some() {
                return Err(DataError::InvalidMap(format!("segment {} listed twice", s.id.0)));
            }
        }
        for id in segment_ids.iter().filter(|id| !id.is_void()) {
            match area.get_mut(id) {
                Some(a) => *a += 1,
                None => return Err(DataError::UnknownSegment(id.0)),
            }
        }
        if let Some(s) = segments.iter().find(|s| area[&s.id] == 0) {
            return Err(DataError::InvalidMap(format!("segment {} covers no pixels", s.id.0)));
        }
        Ok(PanopticMap { height, width, segment_ids, segments })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn segment_ids(&self) -> &[SegmentId] {
        &self.segment_ids
    }

    pub fn segments(&self) -> &[SegmentInfo] {
        &self.segments
    }

    pub fn get(&self, row: usize, col: usize) -> SegmentId {
        self.segment_ids[row * self.width + col]
    }

    pub fn segment(&self, id: SegmentId) -> Option<&SegmentInfo> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn validate(&self, num_categories: usize) -> Result<()> {
        match self.segments.iter().find(|s| s.category_id as usize >= num_categories) {
            Some(s) => Err(DataError::LabelOutOfRange {
                value: s.category_id as u32,
                limit: num_categories as u32,
            }),
            None => Ok(()),
        }
    }

    pub(crate) fn category_lookup(&self) -> HashMap<SegmentId, u16> {
        self.segments.iter().map(|s| (s.id, s.category_id)).collect()
    }
}

/// Collapses a panoptic map to per-pixel categories; VOID becomes IGNORE.
pub fn panoptic_to_semantic(map: &PanopticMap) -> SemanticMap {
    let lookup = map.category_lookup();
    let labels = map
        .segment_ids
        .iter()
        .map(|id| if id.is_void() { Label::IGNORE } else { Label::category(lookup[id]) })
        .collect();
    SemanticMap { height: map.height, width: map.width, labels }
}
