//! MaskSyn and ImgSyn orchestration.
//!
//! MaskSyn turns one real sample into `k` new (mask, image) pairs:
//! caption the real image, sample a color map from the caption, project it
//! to labels by nearest palette color, re-encode the labels with the palette
//! and condition image generation on that quantized map. ImgSyn keeps the
//! human mask and samples `n` new images conditioned on its color encoding.
//!
//! [`run_batch`] drives either mode over a manifest with a bounded worker
//! pool. Output records are committed in input order, so the manifest bytes
//! do not depend on the worker count, and a rerun skips every sample id that
//! is already committed.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorcodec::{decode_semantic, encode_panoptic, encode_semantic, CodecError, ColorMap, Palette, DEFAULT_EDGE_WIDTH};
use crate::genbackend::{self, mask2img_png, Backend, BackendError, SamplingOptions};
use crate::seeds::{item_seed, retry_seed, SeedHasher};
use crate::segdata::store::PayloadKind;
use crate::segdata::{
    image_to_png, load_coco_panoptic, load_semantic_png, save_semantic_png, DataError, GeneratorMeta, Manifest, ManifestFilter,
    ManifestHeader, ManifestWriter, PayloadStore, Provenance, SampleRecord, SemanticMap,
};

pub const JOB_CONFIG_VERSION: u32 = 1;

/// Categories covering less than this fraction of a MaskSyn mask (in
/// thousandths) mark it as degenerate.
const MIN_CATEGORY_PER_MILLE: u64 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("storage error: {0}")]
    Storage(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why a single generation item failed; failures are logged, not fatal.
#[derive(Debug, Error)]
pub enum ItemError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("input: {0}")]
    Input(DataError),
}

impl ItemError {
    fn kind(&self) -> &'static str {
        match self {
            ItemError::Backend(e) => e.kind(),
            ItemError::Codec(_) => "codec",
            ItemError::Input(_) => "input",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    MaskSyn,
    ImgSyn,
}

impl Mode {
    pub fn provenance(self) -> Provenance {
        match self {
            Mode::MaskSyn => Provenance::MaskSyn,
            Mode::ImgSyn => Provenance::ImgSyn,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Mode::MaskSyn => "masksyn",
            Mode::ImgSyn => "imgsyn",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Semantic,
    Panoptic,
}

fn default_parallelism() -> usize {
    1
}
fn default_edge_width() -> usize {
    DEFAULT_EDGE_WIDTH
}
fn default_resolution() -> u32 {
    genbackend::DEFAULT_RESOLUTION
}
fn default_t2m_steps() -> u32 {
    genbackend::TEXT2MASK_STEPS
}
fn default_m2i_steps() -> u32 {
    genbackend::MASK2IMG_STEPS
}

/// Versioned batch job description.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub version: u32,
    pub mode: Mode,
    /// `k` for MaskSyn, `n` for ImgSyn.
    pub count: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub job_seed: u64,
    /// Root that input manifest refs resolve against.
    pub data_root: PathBuf,
    /// Root for generated payloads, the output manifest and the failure ledger.
    pub output_root: PathBuf,
    #[serde(default)]
    pub task: Task,
    #[serde(default = "default_edge_width")]
    pub edge_width: usize,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_t2m_steps")]
    pub text2mask_steps: u32,
    #[serde(default = "default_m2i_steps")]
    pub mask2img_steps: u32,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl JobConfig {
    pub fn new(mode: Mode, count: u32, job_seed: u64, data_root: impl Into<PathBuf>, output_root: impl Into<PathBuf>) -> Self {
        JobConfig {
            version: JOB_CONFIG_VERSION,
            mode,
            count,
            parallelism: 1,
            job_seed,
            data_root: data_root.into(),
            output_root: output_root.into(),
            task: Task::Semantic,
            edge_width: DEFAULT_EDGE_WIDTH,
            resolution: genbackend::DEFAULT_RESOLUTION,
            text2mask_steps: genbackend::TEXT2MASK_STEPS,
            mask2img_steps: genbackend::MASK2IMG_STEPS,
            extra: serde_json::Value::Null,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.version != JOB_CONFIG_VERSION {
            return bad(&format!("unsupported job config version {}", self.version));
        }
        if self.parallelism == 0 {
            return bad("parallelism must be >= 1");
        }
        if self.edge_width == 0 {
            return bad("edge_width must be >= 1");
        }
        if self.resolution == 0 {
            return bad("resolution must be >= 1");
        }
        if self.mode == Mode::MaskSyn && self.task == Task::Panoptic {
            return bad("MaskSyn generates semantic masks only");
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingOptions {
        SamplingOptions {
            resolution: self.resolution,
            text2mask_steps: self.text2mask_steps,
            mask2img_steps: self.mask2img_steps,
            extra: self.extra.clone(),
        }
    }

    /// Stable hash of every field except parallelism, which cannot change the
    /// output.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v.as_object_mut().expect("object").remove("parallelism");
        format!("{:016x}", SeedHasher::new("segpipe.job").str(&v.to_string()).finish())
    }

    pub fn output_manifest_path(&self) -> PathBuf {
        self.output_root.join(format!("{}.jsonl", self.mode.tag()))
    }

    pub fn failure_ledger_path(&self) -> PathBuf {
        self.output_root.join(format!("{}.failures.jsonl", self.mode.tag()))
    }
}

/// Everything a generation step needs besides the sample itself.
pub struct GenContext<'a> {
    pub backend: &'a dyn Backend,
    pub palette: &'a Palette,
    pub input: &'a PayloadStore,
    pub output: &'a PayloadStore,
    pub config: &'a JobConfig,
}

/// One line of the failure ledger.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub source_id: String,
    pub index: u32,
    pub seed: u64,
    pub kind: String,
    pub message: String,
}

/// Result of one generation item.
#[derive(Debug)]
pub enum ItemOutcome {
    Generated(Box<SampleRecord>),
    Failed(FailureRecord),
}

pub fn synthetic_id(source_id: &str, mode: Mode, index: u32) -> String {
    format!("{source_id}#{}-{index}", mode.tag())
}

fn is_degenerate(mask: &SemanticMap) -> bool {
    let hist = mask.category_histogram();
    let total = (mask.height() * mask.width()) as u64;
    hist.len() < 2 || hist.values().any(|&n| n * 1000 < total * MIN_CATEGORY_PER_MILLE)
}

fn caption_for(ctx: &GenContext<'_>, real: &SampleRecord) -> Result<String, ItemError> {
    if !real.caption.trim().is_empty() {
        return Ok(real.caption.clone());
    }
    let image = ctx.input.get(&real.image_ref).map_err(ItemError::Input)?;
    let image = image_to_png(&image).map_err(ItemError::Input)?;
    Ok(genbackend::caption(ctx.backend, &image)?)
}

fn failure(id: String, real: &SampleRecord, index: u32, seed: u64, e: &ItemError) -> ItemOutcome {
    ItemOutcome::Failed(FailureRecord {
        sample_id: id,
        source_id: real.sample_id.clone(),
        index,
        seed,
        kind: e.kind().into(),
        message: e.to_string(),
    })
}

fn ensure_real(real: &SampleRecord) -> Result<(), PipelineError> {
    if real.provenance != Provenance::Real {
        return Err(PipelineError::Config(format!("{:?} is not a REAL record", real.sample_id)));
    }
    Ok(())
}

/// Generates the MaskSyn items `indices` (normally `0..k`) for one real sample.
pub fn masksyn(
    ctx: &GenContext<'_>,
    real: &SampleRecord,
    indices: &[u32],
) -> Result<Vec<ItemOutcome>, PipelineError> {
    ensure_real(real)?;
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let caption = match caption_for(ctx, real) {
        Ok(c) => c,
        Err(e) => {
            return Ok(indices
                .iter()
                .map(|&i| {
                    let seed = item_seed(ctx.config.job_seed, &real.sample_id, i as u64);
                    failure(synthetic_id(&real.sample_id, Mode::MaskSyn, i), real, i, seed, &e)
                })
                .collect())
        }
    };
    let opts = ctx.config.sampling();
    let info = ctx.backend.info();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let id = synthetic_id(&real.sample_id, Mode::MaskSyn, i);
        let seed = item_seed(ctx.config.job_seed, &real.sample_id, i as u64);
        let sample = || -> Result<(u64, SemanticMap, bool), ItemError> {
            let draw = |s: u64| -> Result<SemanticMap, ItemError> {
                let maps = genbackend::text2mask(ctx.backend, &caption, 1, s, &opts)?;
                Ok(decode_semantic(&maps[0], ctx.palette))
            };
            let mask = draw(seed)?;
            if !is_degenerate(&mask) {
                return Ok((seed, mask, false));
            }
            let retry = retry_seed(seed);
            Ok((retry, draw(retry)?, true))
        };
        let generated = sample().and_then(|(used_seed, mask, regenerated)| {
            let quantized = encode_semantic(&mask, ctx.palette)?;
            let cond_png = quantized.to_png();
            let dims = (quantized.width() as u32, quantized.height() as u32);
            let images = mask2img_png(ctx.backend, &caption, &cond_png, dims, 1, used_seed, &opts)?;
            Ok((used_seed, mask, regenerated, cond_png, images.into_iter().next().expect("one image")))
        });
        match generated {
            Err(e) => out.push(failure(id, real, i, seed, &e)),
            Ok((used_seed, mask, regenerated, cond_png, image)) => {
                let degenerate = is_degenerate(&mask);
                let mask_ref = ctx.output.put(PayloadKind::Mask, &save_semantic_png(&mask))?;
                let conditioning_ref = ctx.output.put(PayloadKind::Mask, &cond_png)?;
                let image_ref = ctx.output.put(PayloadKind::Image, &image)?;
                out.push(ItemOutcome::Generated(Box::new(SampleRecord {
                    sample_id: id,
                    provenance: Provenance::MaskSyn,
                    source_id: real.sample_id.clone(),
                    image_ref,
                    mask_ref,
                    caption: caption.clone(),
                    segments_info: None,
                    generator_meta: Some(GeneratorMeta {
                        backend: info.name.clone(),
                        version: info.version.clone(),
                        seed: used_seed,
                        text2mask_steps: Some(opts.text2mask_steps),
                        mask2img_steps: opts.mask2img_steps,
                        conditioning_ref: Some(conditioning_ref),
                        regenerated,
                        degenerate,
                    }),
                })));
            }
        }
    }
    Ok(out)
}

/// Builds the conditioning color map of a real sample's human mask.
pub fn conditioning_map(
    real: &SampleRecord,
    mask_png: &[u8],
    palette: &Palette,
    task: Task,
    edge_width: usize,
) -> Result<ColorMap, ItemError> {
    match task {
        Task::Semantic => {
            let mask = load_semantic_png(mask_png, palette.num_categories()).map_err(ItemError::Input)?;
            Ok(encode_semantic(&mask, palette)?)
        }
        Task::Panoptic => {
            let segments = real.segments_info.as_deref().ok_or_else(|| {
                ItemError::Input(DataError::Format(format!("{:?} has no segments_info", real.sample_id)))
            })?;
            let map = load_coco_panoptic(mask_png, segments).map_err(ItemError::Input)?;
            Ok(encode_panoptic(&map, palette, edge_width)?)
        }
    }
}

/// Generates the ImgSyn items `indices` (normally `0..n`) for one real sample.
pub fn imgsyn(
    ctx: &GenContext<'_>,
    real: &SampleRecord,
    indices: &[u32],
) -> Result<Vec<ItemOutcome>, PipelineError> {
    ensure_real(real)?;
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let fail_all = |e: ItemError| -> Vec<ItemOutcome> {
        indices
            .iter()
            .map(|&i| {
                let seed = item_seed(ctx.config.job_seed, &real.sample_id, i as u64);
                failure(synthetic_id(&real.sample_id, Mode::ImgSyn, i), real, i, seed, &e)
            })
            .collect()
    };
    let prepared = ctx.input.get(&real.mask_ref).map_err(ItemError::Input).and_then(|mask_png| {
        let cond = conditioning_map(real, &mask_png, ctx.palette, ctx.config.task, ctx.config.edge_width)?;
        Ok((mask_png, cond))
    });
    let (mask_png, cond) = match prepared {
        Ok(p) => p,
        Err(e) => return Ok(fail_all(e)),
    };
    let caption = match caption_for(ctx, real) {
        Ok(c) => c,
        Err(e) => return Ok(fail_all(e)),
    };
    let mask_ref = if ctx.input.root() == ctx.output.root() {
        real.mask_ref.clone()
    } else {
        ctx.output.put(PayloadKind::Mask, &mask_png)?
    };
    let cond_png = cond.to_png();
    let conditioning_ref = ctx.output.put(PayloadKind::Mask, &cond_png)?;
    let dims = (cond.width() as u32, cond.height() as u32);
    let opts = ctx.config.sampling();
    let info = ctx.backend.info();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let id = synthetic_id(&real.sample_id, Mode::ImgSyn, i);
        let seed = item_seed(ctx.config.job_seed, &real.sample_id, i as u64);
        match mask2img_png(ctx.backend, &caption, &cond_png, dims, 1, seed, &opts) {
            Err(e) => out.push(failure(id, real, i, seed, &e.into())),
            Ok(images) => {
                let image_ref = ctx.output.put(PayloadKind::Image, &images[0])?;
                out.push(ItemOutcome::Generated(Box::new(SampleRecord {
                    sample_id: id,
                    provenance: Provenance::ImgSyn,
                    source_id: real.sample_id.clone(),
                    image_ref,
                    mask_ref: mask_ref.clone(),
                    caption: caption.clone(),
                    segments_info: real.segments_info.clone(),
                    generator_meta: Some(GeneratorMeta {
                        backend: info.name.clone(),
                        version: info.version.clone(),
                        seed,
                        text2mask_steps: None,
                        mask2img_steps: opts.mask2img_steps,
                        conditioning_ref: Some(conditioning_ref.clone()),
                        regenerated: false,
                        degenerate: false,
                    }),
                })));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BatchReport {
    pub output_manifest: PathBuf,
    pub failure_ledger: PathBuf,
    pub generated: u64,
    pub skipped: u64,
    pub failed: u64,
}

fn append_failures(path: &Path, failures: &[FailureRecord]) -> Result<(), PipelineError> {
    if failures.is_empty() {
        return Ok(());
    }
    let mut buf = Vec::new();
    for f in failures {
        serde_json::to_writer(&mut buf, f).expect("failure serializes");
        buf.push(b'\n');
    }
    OpenOptions::new().create(true).append(true).open(path)?.write_all(&buf)?;
    Ok(())
}

/// Runs one generation job over every REAL record of `input_manifest`.
pub fn run_batch(
    input_manifest: &Path,
    config: &JobConfig,
    backend: &dyn Backend,
    palette: &Palette,
) -> Result<BatchReport, PipelineError> {
    config.validate()?;
    let input = Manifest::open(input_manifest)?;
    if input.header().num_categories as usize != palette.num_categories() {
        return Err(PipelineError::Config(format!(
            "manifest declares {} categories, palette has {}",
            input.header().num_categories,
            palette.num_categories()
        )));
    }
    let reals: Vec<SampleRecord> = input.scan(ManifestFilter::provenance(Provenance::Real))?.collect::<Result<_, _>>()?;

    fs::create_dir_all(&config.output_root)?;
    let header = ManifestHeader::new(
        format!("{}-{}", input.header().dataset, config.mode.tag()),
        input.header().num_categories,
    );
    let out_path = config.output_manifest_path();
    let ledger_path = config.failure_ledger_path();
    let mut writer = ManifestWriter::open_or_create(&out_path, header)?;

    // Work list: per real sample, the item indices not yet committed.
    let mut skipped = 0u64;
    let work: Vec<(usize, Vec<u32>)> = reals
        .iter()
        .enumerate()
        .filter_map(|(pos, real)| {
            let missing: Vec<u32> = (0..config.count)
                .filter(|&i| !writer.contains(&synthetic_id(&real.sample_id, config.mode, i)))
                .collect();
            skipped += (config.count as usize - missing.len()) as u64;
            (!missing.is_empty()).then_some((pos, missing))
        })
        .collect();

    let input_store = PayloadStore::new(&config.data_root);
    let output_store = PayloadStore::new(&config.output_root);
    let ctx = GenContext { backend, palette, input: &input_store, output: &output_store, config };
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::sync_channel::<(usize, Result<Vec<ItemOutcome>, PipelineError>)>(config.parallelism * 2);

    let mut generated = 0u64;
    let mut failed = 0u64;
    let mut fatal: Option<PipelineError> = None;
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.min(work.len().max(1)) {
            let tx = tx.clone();
            let (ctx, work, next, abort, reals) = (&ctx, &work, &next, &abort, &reals);
            scope.spawn(move || loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some((pos, indices)) = work.get(slot) else { break };
                let real = &reals[*pos];
                let result = match config.mode {
                    Mode::MaskSyn => masksyn(ctx, real, indices),
                    Mode::ImgSyn => imgsyn(ctx, real, indices),
                };
                if tx.send((slot, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Commit strictly in work order.
        let mut pending: BTreeMap<usize, Vec<ItemOutcome>> = BTreeMap::new();
        let mut cursor = 0usize;
        for (slot, result) in rx {
            match result {
                Ok(items) => {
                    pending.insert(slot, items);
                }
                Err(e) => {
                    abort.store(true, Ordering::Relaxed);
                    fatal.get_or_insert(e);
                    continue;
                }
            }
            if fatal.is_some() {
                continue;
            }
            while let Some(items) = pending.remove(&cursor) {
                let mut failures = Vec::new();
                let committed = items.into_iter().try_for_each(|item| match item {
                    ItemOutcome::Generated(rec) => {
                        generated += 1;
                        writer.append(*rec)
                    }
                    ItemOutcome::Failed(f) => {
                        failed += 1;
                        failures.push(f);
                        Ok(())
                    }
                });
                let flushed = committed
                    .map_err(PipelineError::from)
                    .and_then(|_| writer.commit().map_err(PipelineError::from))
                    .and_then(|_| append_failures(&ledger_path, &failures));
                if let Err(e) = flushed {
                    abort.store(true, Ordering::Relaxed);
                    fatal = Some(e);
                    break;
                }
                cursor += 1;
            }
        }
    });
    if let Some(e) = fatal {
        return Err(e);
    }
    writer.commit()?;
    Ok(BatchReport { output_manifest: out_path, failure_ledger: ledger_path, generated, skipped, failed })
}
