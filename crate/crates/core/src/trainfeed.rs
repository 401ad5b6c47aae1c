//! Training-data feeds built from real and synthetic manifests.
//!
//! Two strategies are supported: per-iteration replacement, where each real
//! sample is swapped for one of its synthetic offspring with probability
//! `p_aug`, and two-stage training, where a synthetic-only manifest is used
//! for pre-training and a real-only manifest for fine-tuning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::SeedHasher;
use crate::segdata::{DataError, Manifest, ManifestFilter, ManifestHeader, ManifestWriter, SampleRecord};

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("invalid feed plan: {0}")]
    InvalidPlan(String),
    #[error("synthetic record {sample_id:?} references missing real sample {source_id:?}")]
    DanglingSource { sample_id: String, source_id: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = FeedError> = std::result::Result<T, E>;

/// Real sample id -> ids of synthetic samples derived from it.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Linkage(BTreeMap<String, Vec<String>>);

impl Linkage {
    pub fn get(&self, real_id: &str) -> &[String] {
        self.0.get(real_id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.0.iter()
    }
}

impl FromIterator<(String, Vec<String>)> for Linkage {
    fn from_iter<I: IntoIterator<Item = (String, Vec<String>)>>(iter: I) -> Self {
        Linkage(iter.into_iter().filter(|(_, v)| !v.is_empty()).collect())
    }
}

/// Groups synthetic records under their real source, keeping manifest order.
/// With `cap_per_real`, longer lists are subsampled uniformly without
/// replacement (seeded per real id).
pub fn build_linkage<'a>(
    real_ids: impl IntoIterator<Item = &'a str>,
    synthetic: impl IntoIterator<Item = SampleRecord>,
    cap_per_real: Option<usize>,
    seed: u64,
) -> Result<Linkage> {
    let reals: HashSet<&str> = real_ids.into_iter().collect();
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for rec in synthetic {
        if !rec.provenance.is_synthetic() {
            continue;
        }
        if !reals.contains(rec.source_id.as_str()) {
            return Err(FeedError::DanglingSource { sample_id: rec.sample_id, source_id: rec.source_id });
        }
        groups.entry(rec.source_id).or_default().push(rec.sample_id);
    }
    if let Some(cap) = cap_per_real {
        for (real, ids) in groups.iter_mut() {
            if ids.len() > cap {
                let mut rng = SeedHasher::new("feed.cap").u64(seed).str(real).rng();
                let mut keep = sample(&mut rng, ids.len(), cap).into_vec();
                keep.sort_unstable();
                *ids = keep.into_iter().map(|i| std::mem::take(&mut ids[i])).collect();
            }
        }
    }
    Ok(groups.into_iter().collect())
}

/// Where a replacement draw picks its synthetic sample from.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplacementSource {
    /// Only synthetics derived from the drawn real sample.
    #[default]
    PerSample,
    /// Any synthetic sample in the linkage.
    GlobalPool,
}

#[derive(Clone, Debug)]
pub struct FeedPlan {
    p_aug: f64,
    seed: u64,
    real_ids: Vec<String>,
    linkage: Linkage,
    source: ReplacementSource,
    pool: Vec<String>,
}

impl FeedPlan {
    pub fn new(
        p_aug: f64,
        seed: u64,
        real_ids: Vec<String>,
        linkage: Linkage,
        source: ReplacementSource,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_aug) {
            return Err(FeedError::InvalidPlan(format!("p_aug {p_aug} outside [0, 1]")));
        }
        if real_ids.is_empty() {
            return Err(FeedError::InvalidPlan("no real samples".into()));
        }
        let unique: HashSet<&String> = real_ids.iter().collect();
        if unique.len() != real_ids.len() {
            return Err(FeedError::InvalidPlan("duplicate real sample ids".into()));
        }
        if let Some((real, _)) = linkage.iter().find(|(r, _)| !unique.contains(r)) {
            return Err(FeedError::InvalidPlan(format!("linkage key {real:?} is not a real sample")));
        }
        let pool = match source {
            ReplacementSource::PerSample => Vec::new(),
            ReplacementSource::GlobalPool => {
                linkage.iter().flat_map(|(_, v)| v.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect()
            }
        };
        Ok(FeedPlan { p_aug, seed, real_ids, linkage, source, pool })
    }

    pub fn p_aug(&self) -> f64 {
        self.p_aug
    }

    pub fn epoch_length(&self) -> usize {
        self.real_ids.len()
    }

    pub fn linkage(&self) -> &Linkage {
        &self.linkage
    }

    fn epoch_order(&self, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.real_ids.len()).collect();
        order.shuffle(&mut SeedHasher::new("feed.epoch").u64(self.seed).u64(epoch).rng());
        order
    }

    fn resolve(&self, iteration: u64, real_index: usize) -> FeedDraw {
        let real_id = &self.real_ids[real_index];
        let mut rng = SeedHasher::new("feed.draw").u64(self.seed).u64(iteration).rng();
        // random::<f64>() is in [0, 1): p = 0 never replaces, p = 1 always does.
        let replace = rng.random::<f64>() < self.p_aug;
        let candidates: &[String] = match self.source {
            ReplacementSource::PerSample => self.linkage.get(real_id),
            ReplacementSource::GlobalPool => &self.pool,
        };
        let (sample_id, synthetic, shortfall) = match (replace, candidates.is_empty()) {
            (false, _) => (real_id.clone(), false, false),
            (true, true) => (real_id.clone(), false, true),
            (true, false) => (candidates[rng.random_range(0..candidates.len())].clone(), true, false),
        };
        FeedDraw { iteration, real_id: real_id.clone(), sample_id, synthetic, shortfall }
    }

    /// The draw at `iteration`, computed independently of any stream; lets
    /// consumers shard by iteration index.
    pub fn draw_at(&self, iteration: u64) -> FeedDraw {
        let len = self.real_ids.len() as u64;
        let order = self.epoch_order(iteration / len);
        self.resolve(iteration, order[(iteration % len) as usize])
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FeedDraw {
    pub iteration: u64,
    pub real_id: String,
    /// Id actually fed to training.
    pub sample_id: String,
    pub synthetic: bool,
    /// A replacement was drawn but the real sample had no linked synthetics.
    pub shortfall: bool,
}

/// Iterator over the first `num_iterations` draws of a plan.
pub struct AugmentStream<'a> {
    plan: &'a FeedPlan,
    next: u64,
    end: u64,
    epoch: Option<(u64, Vec<usize>)>,
    shortfall: u64,
}

impl AugmentStream<'_> {
    /// Replacement draws so far that fell back to the real sample.
    pub fn shortfall(&self) -> u64 {
        self.shortfall
    }
}

impl Iterator for AugmentStream<'_> {
    type Item = FeedDraw;

    fn next(&mut self) -> Option<FeedDraw> {
        if self.next >= self.end {
            return None;
        }
        let t = self.next;
        self.next += 1;
        let len = self.plan.epoch_length() as u64;
        let epoch = t / len;
        if self.epoch.as_ref().is_none_or(|(e, _)| *e != epoch) {
            self.epoch = Some((epoch, self.plan.epoch_order(epoch)));
        }
        let order = &self.epoch.as_ref().expect("epoch cached").1;
        let draw = self.plan.resolve(t, order[(t % len) as usize]);
        self.shortfall += draw.shortfall as u64;
        Some(draw)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

pub fn augment_stream(plan: &FeedPlan, num_iterations: u64) -> AugmentStream<'_> {
    AugmentStream { plan, next: 0, end: num_iterations, epoch: None, shortfall: 0 }
}

/// Writes the fed sample ids, one per line. Returns the shortfall count.
pub fn write_id_list(stream: AugmentStream<'_>, out: &mut impl Write) -> std::io::Result<u64> {
    let mut stream = stream;
    for draw in stream.by_ref() {
        writeln!(out, "{}", draw.sample_id)?;
    }
    Ok(stream.shortfall())
}

fn emit(inputs: &[Manifest], out: &Path, header: ManifestHeader, keep: impl Fn(&SampleRecord) -> bool) -> Result<u64> {
    if let Some(m) = inputs.iter().find(|m| m.header().num_categories != header.num_categories) {
        return Err(DataError::Schema(format!(
            "{} declares {} categories, expected {}",
            m.path().display(),
            m.header().num_categories,
            header.num_categories
        ))
        .into());
    }
    let mut writer = ManifestWriter::create(out, header)?;
    for m in inputs {
        for rec in m.scan(ManifestFilter::all())? {
            let rec = rec?;
            if keep(&rec) {
                writer.append(rec)?;
            }
        }
    }
    writer.commit()?;
    Ok(writer.len())
}

/// Synthetic-only manifest for the pre-training stage.
pub fn emit_pretrain(syn_manifests: &[Manifest], out: &Path, header: ManifestHeader) -> Result<u64> {
    emit(syn_manifests, out, header, |r| r.provenance.is_synthetic())
}

/// Real-only manifest for the fine-tuning stage.
pub fn emit_finetune(real_manifest: &Manifest, out: &Path, header: ManifestHeader) -> Result<u64> {
    emit(std::slice::from_ref(real_manifest), out, header, |r| !r.provenance.is_synthetic())
}
