//! `segpipe metrics`: directory-pair evaluation and the manifest
//! self-consistency check.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use segpipe_core::colorcodec::decode_semantic;
use segpipe_core::segdata::{
    load_coco_panoptic, load_semantic_png, panoptic_to_semantic, DataError, Manifest, ManifestFilter, PayloadStore,
    SemanticMap,
};
use segpipe_core::segmetrics::{ConfusionMatrix, PqAccumulator};
use segpipe_core::{ColorMap, Palette};

use crate::{load_palette, load_segments, read, repro_header, TaskArg, ENV_DATA_ROOT};

#[derive(Args, Debug, Serialize)]
pub struct MetricsArgs {
    /// Palette JSON; fixes the category count and decodes RGB predictions.
    #[arg(long)]
    palette: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    task: TaskArg,
    /// Prediction directory. Semantic: label or color map PNGs. Panoptic:
    /// `<stem>.png` plus `<stem>.json` segments info.
    #[arg(long, requires = "gt", conflicts_with = "manifest")]
    pred: Option<PathBuf>,
    /// Ground-truth directory, same layout; files are paired by name.
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    /// Score each synthetic record's decoded conditioning map against its
    /// stored mask.
    #[arg(long, requires = "data_root")]
    manifest: Option<PathBuf>,
    /// Root the manifest refs resolve against.
    #[arg(long, env = ENV_DATA_ROOT)]
    data_root: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: MetricsArgs) -> Result<()> {
    repro_header("metrics", &args, json!({}), None);
    let palette = load_palette(&args.palette)?;
    let report = match (&args.pred, &args.gt, &args.manifest) {
        (Some(pred), Some(gt), None) => match args.task {
            TaskArg::Semantic => semantic_dirs(pred, gt, &palette)?,
            TaskArg::Panoptic => panoptic_dirs(pred, gt)?,
        },
        (None, None, Some(manifest)) => {
            self_consistency(manifest, args.data_root.as_deref().expect("required by clap"), &palette)?
        }
        _ => bail!("pass either --pred and --gt, or --manifest"),
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => crate::write(path, format!("{text}\n").as_bytes()),
        None => crate::emit(text),
    }
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut stems = BTreeSet::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".png") {
            stems.insert(stem.to_string());
        }
    }
    Ok(stems)
}

/// Grayscale label PNGs load directly; RGB ones are decoded with the palette.
fn load_prediction(bytes: &[u8], palette: &Palette) -> Result<SemanticMap> {
    match load_semantic_png(bytes, palette.num_categories()) {
        Ok(map) => Ok(map),
        Err(DataError::Format(_)) => Ok(decode_semantic(&ColorMap::from_png(bytes)?, palette)),
        Err(e) => Err(e.into()),
    }
}

fn semantic_dirs(pred_dir: &Path, gt_dir: &Path, palette: &Palette) -> Result<Value> {
    let mut cm = ConfusionMatrix::new(palette.num_categories());
    let stems = png_stems(gt_dir)?;
    for stem in &stems {
        let file = format!("{stem}.png");
        let gt = load_semantic_png(&read(&gt_dir.join(&file))?, palette.num_categories())
            .with_context(|| format!("ground truth {file}"))?;
        let pred = load_prediction(&read(&pred_dir.join(&file))?, palette).with_context(|| format!("prediction {file}"))?;
        cm.add(&pred, &gt).with_context(|| file.clone())?;
    }
    let report = cm.report()?;
    Ok(json!({"task": "semantic", "images": stems.len(), "miou": report.miou, "per_category": report.per_category}))
}

fn panoptic_dirs(pred_dir: &Path, gt_dir: &Path) -> Result<Value> {
    let mut acc = PqAccumulator::default();
    let stems = png_stems(gt_dir)?;
    for stem in &stems {
        let load = |dir: &Path| -> Result<_> {
            let segments = load_segments(&dir.join(format!("{stem}.json")))?;
            Ok(load_coco_panoptic(&read(&dir.join(format!("{stem}.png")))?, &segments)?)
        };
        let gt = load(gt_dir).with_context(|| format!("ground truth {stem}"))?;
        let pred = load(pred_dir).with_context(|| format!("prediction {stem}"))?;
        acc.add(&pred, &gt).with_context(|| stem.clone())?;
    }
    let report = acc.report()?;
    Ok(json!({
        "task": "panoptic",
        "images": stems.len(),
        "pq": report.pq,
        "sq": report.sq,
        "rq": report.rq,
        "per_category": report.per_category,
    }))
}

fn self_consistency(manifest: &Path, data_root: &Path, palette: &Palette) -> Result<Value> {
    let manifest = Manifest::open(manifest)?;
    let store = PayloadStore::new(data_root);
    let mut total = ConfusionMatrix::new(palette.num_categories());
    let mut records = 0u64;
    let mut min_miou: Option<f64> = None;
    for rec in manifest.scan(ManifestFilter::all())? {
        let rec = rec?;
        let Some(cond_ref) = rec.generator_meta.as_ref().and_then(|m| m.conditioning_ref.as_deref()) else {
            continue;
        };
        let pred = decode_semantic(&ColorMap::from_png(&store.get(cond_ref)?)?, palette);
        let mask = store.get(&rec.mask_ref)?;
        let gt = match &rec.segments_info {
            Some(segments) => panoptic_to_semantic(&load_coco_panoptic(&mask, segments)?),
            None => load_semantic_png(&mask, palette.num_categories())?,
        };
        let mut cm = ConfusionMatrix::new(palette.num_categories());
        cm.add(&pred, &gt).with_context(|| rec.sample_id.clone())?;
        let miou = cm.report().with_context(|| rec.sample_id.clone())?.miou;
        min_miou = Some(min_miou.map_or(miou, |m: f64| m.min(miou)));
        total.merge(&cm);
        records += 1;
    }
    if records == 0 {
        bail!("{} has no records with a conditioning map", manifest.path().display());
    }
    let report = total.report()?;
    Ok(json!({
        "task": "self-consistency",
        "records": records,
        "miou": report.miou,
        "min_record_miou": min_miou,
        "per_category": report.per_category,
    }))
}
